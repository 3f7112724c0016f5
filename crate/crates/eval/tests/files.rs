use clinlm_eval::files::{score_task, ScoreOptions};
use clinlm_eval::tasks::{EvalReport, MetricKind, TaskId};
use clinlm_eval::EvalError;

fn score(task: TaskId, gold: &str, pred: &str) -> f64 {
    score_task(task, gold, pred, &ScoreOptions::default()).unwrap().score
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

#[test]
fn span_tasks() {
    let gold = r#"{"id":"1","entities":[{"start":0,"end":3,"category":"dis"},{"start":5,"end":8,"category":"dru"}]}"#;
    let pred = r#"{"id":"1","entities":[{"start":0,"end":3,"category":"dis"}]}"#;
    assert!(close(score(TaskId::CMeEE, gold, pred), 200.0 / 3.0));
    let r = score_task(TaskId::ImcsNer, gold, gold, &ScoreOptions::default()).unwrap();
    assert_eq!((r.metric, r.score), (MetricKind::EntityF1, 100.0));
    let bad = r#"{"id":"1","entities":[{"start":4,"end":4,"category":"dis"}]}"#;
    assert!(score_task(TaskId::CMeEE, gold, bad, &ScoreOptions::default()).is_err());
}

#[test]
fn tuple_tasks() {
    let g = r#"{"id":"1","triples":[{"subject":"a","predicate":"r1","object":"b"},{"subject":"b","predicate":"r2","object":"c"}]}"#;
    let p = r#"{"id":"1","triples":[{"subject":"a","predicate":"r1","object":"b"}]}"#;
    assert!(close(score(TaskId::CMeIE, g, p), 200.0 / 3.0));
    assert!(close(score(TaskId::CMedCausal, g, p), 50.0));

    let g = r#"{"id":"e","events":[{"subject":"咳嗽","site":"肺","descriptor":"剧烈","state":"阳性"}]}"#;
    assert_eq!(score(TaskId::ChipCdee, g, g), 100.0);
    let p = r#"{"id":"e","events":[{"subject":"咳嗽","site":"肺","descriptor":"剧烈","state":"阴性"}]}"#;
    assert_eq!(score(TaskId::ChipCdee, g, p), 0.0);

    let g = r#"{"id":"n","pairs":[{"original":"高血压病","standard":"高血压"}]}"#;
    assert_eq!(score(TaskId::ChipCdn, g, g), 100.0);

    let g = r#"{"id":"f","findings":[{"term":"发热","status":"阳性"},{"term":"咳嗽","status":"阴性"}]}"#;
    let p = r#"{"id":"f","findings":[{"term":"发热","status":"阳性"},{"term":"咳嗽","status":"阳性"}]}"#;
    // 阳性: P 1/2, R 1 → 66.67; 阴性: 0.
    assert!(close(score(TaskId::ChipMdcfnpc, g, p), 100.0 / 3.0));
}

#[test]
fn symptom_recognition_granularities() {
    let gold = "{\"id\":\"u1\",\"dialog\":\"d1\",\"symptoms\":[{\"term\":\"发热\",\"status\":\"阳性\"}]}\n\
                {\"id\":\"u2\",\"dialog\":\"d1\",\"symptoms\":[]}\n";
    let pred = "{\"id\":\"u1\",\"dialog\":\"d1\",\"symptoms\":[]}\n\
                {\"id\":\"u2\",\"dialog\":\"d1\",\"symptoms\":[{\"term\":\"发热\",\"status\":\"阳性\"}]}\n";
    // Right symptom, wrong utterance: wrong per utterance, right per dialogue.
    assert_eq!(score(TaskId::ImcsSrUtterance, gold, pred), 0.0);
    assert_eq!(score(TaskId::ImcsSrDialog, gold, pred), 100.0);
}

#[test]
fn label_tasks() {
    let g = "{\"id\":\"1\",\"label\":\"x\"}\n{\"id\":\"2\",\"label\":\"y\"}\n{\"id\":\"3\",\"label\":\"x\"}\n{\"id\":\"4\",\"label\":\"y\"}\n";
    let p = "{\"id\":\"1\",\"label\":\"x\"}\n{\"id\":\"2\",\"label\":\"y\"}\n{\"id\":\"3\",\"label\":\"x\"}\n{\"id\":\"4\",\"label\":\"x\"}\n";
    assert_eq!(score(TaskId::KuakeQic, g, p), 75.0);
    let want = (100.0 * 2.0 * (2.0 / 3.0) / (1.0 + 2.0 / 3.0) + 100.0 * 2.0 * 0.5 / 1.5) / 2.0;
    assert!(close(score(TaskId::ChipCtc, g, p), want));
    let opts = ScoreOptions { labels: Some(vec!["x".into()]), ..Default::default() };
    assert!(matches!(score_task(TaskId::ChipSts, g, p, &opts), Err(EvalError::UnknownLabel(_))));
}

#[test]
fn retrieval_and_generation_tasks() {
    let g = "{\"id\":\"q1\",\"relevant\":\"d3\"}\n{\"id\":\"q2\",\"relevant\":\"d1\"}\n";
    let p = "{\"id\":\"q1\",\"ranked\":[\"d1\",\"d2\",\"d3\"]}\n{\"id\":\"q2\",\"ranked\":[\"d1\"]}\n";
    assert!(close(score(TaskId::KuakeIr, g, p), 100.0 * (1.0 / 3.0 + 1.0) / 2.0));

    let g = r#"{"id":"r","text":"主诉：头痛"}"#;
    assert_eq!(score(TaskId::ImcsMrg, g, g), 100.0);
    let opts = ScoreOptions { lexicon: vec!["头痛".into()], ..Default::default() };
    assert!(close(score_task(TaskId::MedDg, g, g, &opts).unwrap().score, 100.0));
    assert!(score_task(TaskId::MedDg, g, g, &ScoreOptions::default()).is_err());
}

#[test]
fn multiple_choice_task() {
    let g = "{\"id\":\"1\",\"answer\":\"A\"}\n{\"id\":\"2\",\"answer\":\"C\"}\n";
    let p = "{\"id\":\"1\",\"answer\":\"A\"}\n{\"id\":\"2\",\"answer\":\"B\"}\n";
    assert_eq!(score(TaskId::ClinicalQa, g, p), 50.0);
    let bad = "{\"id\":\"1\",\"answer\":\"A\"}\n{\"id\":\"2\",\"answer\":\"E\"}\n";
    assert!(score_task(TaskId::ClinicalQa, g, bad, &ScoreOptions::default()).is_err());
}

#[test]
fn misaligned_files_rejected() {
    let g = "{\"id\":\"1\",\"label\":\"x\"}\n";
    let p = "{\"id\":\"2\",\"label\":\"x\"}\n";
    assert!(matches!(score_task(TaskId::KuakeQqr, g, p, &ScoreOptions::default()), Err(EvalError::Misaligned { .. })));
    assert!(matches!(score_task(TaskId::KuakeQqr, g, "", &ScoreOptions::default()), Err(EvalError::Length { .. })));
}

#[test]
fn normalization_is_opt_in() {
    let g = r#"{"id":"1","label":"ＹＥＳ"}"#;
    let p = r#"{"id":"1","label":"yes"}"#;
    assert_eq!(score(TaskId::KuakeQtr, g, p), 0.0);
    let opts = ScoreOptions { normalize: true, ..Default::default() };
    assert_eq!(score_task(TaskId::KuakeQtr, g, p, &opts).unwrap().score, 100.0);
}

#[test]
fn report_round_trips_through_json() {
    let r = score_task(
        TaskId::KuakeQic,
        r#"{"id":"1","label":"x"}"#,
        r#"{"id":"1","label":"x"}"#,
        &ScoreOptions::default(),
    )
    .unwrap();
    let rep = EvalReport::new(vec![r]).unwrap();
    let back: EvalReport = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(back, rep);
    assert!(rep.to_json().contains("\"KUAKE-QIC\""));
}
