//! Telemetry stream: newline-delimited JSON events with canonical key
//! order, plus the ground-station aggregation pass that rebuilds a
//! mission report from a recorded stream and cross-checks the report
//! the rover embedded.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hal::Actuator;
use crate::mission::{MissionPhase, MissionReport};
use crate::perception::{AssayResult, Verdict};

pub const TELEMETRY_SCHEMA_VERSION: u32 = 1;

/// Event body. The wire form carries the variant name under `"kind"`
/// and the fields under `"payload"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    /// Stream prologue: schema version plus enough run identity to
    /// interpret the rest offline.
    Header {
        schema_version: u32,
        seed: u64,
        dt_s: f64,
        n_sites: u32,
    },
    PhaseChange {
        phase_from: MissionPhase,
        phase_to: MissionPhase,
        site_index: u32,
    },
    SensorReading {
        sensor: String,
        /// Absent means the sensor timed out.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
    ActuatorCommand {
        actuator: Actuator,
        in1: bool,
        in2: bool,
        duty: f64,
    },
    AssayResultEvent(AssayResult),
    FaultEvent {
        reason: String,
        site_index: u32,
    },
    ReportEvent(MissionReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub seq: u64,
    pub t_s: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

fn contains_null(value: &Value) -> bool {
    match value {
        Value::Null => true,
        Value::Array(items) => items.iter().any(contains_null),
        Value::Object(map) => map.values().any(contains_null),
        _ => false,
    }
}

/// One newline-terminated JSON line. Keys are sorted at every level,
/// so equal events encode to identical bytes. Non-finite numbers have
/// no JSON form and are rejected.
pub fn encode_event(event: &TelemetryEvent) -> Result<String> {
    let value = serde_json::to_value(event)
        .map_err(|e| Error::Encode(format!("unencodable event: {e}")))?;
    if contains_null(&value) {
        return Err(Error::Encode(
            "event contains a non-finite number".into(),
        ));
    }
    let mut line = value.to_string();
    line.push('\n');
    Ok(line)
}

/// Inverse of [`encode_event`] on its image. `line_number` is 1-based
/// and only labels the error.
pub fn decode_event(line: &str, line_number: Option<usize>) -> Result<TelemetryEvent> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Err(Error::Parse {
            line: line_number,
            message: "empty line".into(),
        });
    }
    serde_json::from_str(trimmed).map_err(|e| Error::Parse {
        line: line_number,
        message: e.to_string(),
    })
}

/// Decode a whole stream, attaching 1-based line numbers to failures.
pub fn decode_stream(text: &str) -> Result<Vec<TelemetryEvent>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| decode_event(line, Some(i + 1)))
        .collect()
}

/// A report rebuilt from the stream, alongside whatever the rover
/// claimed about itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedReport {
    /// Recomputed from the events themselves.
    pub report: MissionReport,
    /// The rover's own report, when the stream carries one.
    pub embedded: Option<MissionReport>,
    /// Human-readable disagreements between the two.
    pub mismatches: Vec<String>,
    pub event_count: usize,
}

impl AggregatedReport {
    pub fn integrity_ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Fold a stream into a report. Counts and per-site results come from
/// the assay events; the embedded report is only cross-checked, except
/// for chamber reuse, which the stream does not carry per event.
pub fn aggregate_report(events: &[TelemetryEvent]) -> Result<AggregatedReport> {
    let mut last_seq: Option<u64> = None;
    let mut last_t = f64::NEG_INFINITY;
    for event in events {
        if let Some(prev) = last_seq {
            if event.seq <= prev {
                return Err(Error::Integrity(format!(
                    "seq not strictly increasing: {} after {}",
                    event.seq, prev
                )));
            }
        }
        if event.t_s < last_t {
            return Err(Error::Integrity(format!(
                "t_s decreased: {} after {}",
                event.t_s, last_t
            )));
        }
        last_seq = Some(event.seq);
        last_t = event.t_s;
    }

    let mut report = MissionReport::empty();
    let mut embedded: Option<MissionReport> = None;
    for event in events {
        report.total_sim_time_s = event.t_s;
        match &event.kind {
            EventKind::PhaseChange { phase_to, .. } => {
                if *phase_to == MissionPhase::Deploying {
                    report.sites_visited += 1;
                }
                report.end_phase = *phase_to;
            }
            EventKind::AssayResultEvent(result) => {
                match (result.test_kind, result.verdict) {
                    (crate::perception::TestKind::Protein, Verdict::Positive) => {
                        report.protein_positive_count += 1
                    }
                    (crate::perception::TestKind::Carbohydrate, Verdict::Positive) => {
                        report.carb_positive_count += 1
                    }
                    (_, Verdict::Indeterminate) => report.indeterminate_count += 1,
                    (_, Verdict::Negative) => {}
                }
                report.results.push(*result);
            }
            EventKind::FaultEvent { reason, .. } => {
                report.fault_reason = Some(reason.clone());
            }
            EventKind::ReportEvent(claimed) => {
                embedded = Some(claimed.clone());
            }
            EventKind::Header { .. }
            | EventKind::SensorReading { .. }
            | EventKind::ActuatorCommand { .. } => {}
        }
    }
    if let Some(claimed) = &embedded {
        report.chamber_reuse_count = claimed.chamber_reuse_count;
    }

    let mut mismatches = Vec::new();
    if let Some(claimed) = &embedded {
        let mut check = |name: &str, got: String, want: String| {
            if got != want {
                mismatches.push(format!("{name}: stream says {want}, report says {got}"));
            }
        };
        check(
            "protein_positive_count",
            claimed.protein_positive_count.to_string(),
            report.protein_positive_count.to_string(),
        );
        check(
            "carb_positive_count",
            claimed.carb_positive_count.to_string(),
            report.carb_positive_count.to_string(),
        );
        check(
            "indeterminate_count",
            claimed.indeterminate_count.to_string(),
            report.indeterminate_count.to_string(),
        );
        check(
            "sites_visited",
            claimed.sites_visited.to_string(),
            report.sites_visited.to_string(),
        );
        check(
            "end_phase",
            format!("{:?}", claimed.end_phase),
            format!("{:?}", report.end_phase),
        );
        check(
            "fault_reason",
            format!("{:?}", claimed.fault_reason),
            format!("{:?}", report.fault_reason),
        );
    }

    Ok(AggregatedReport {
        report,
        embedded,
        mismatches,
        event_count: events.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::TestKind;

    fn phase_event(seq: u64, t_s: f64, from: MissionPhase, to: MissionPhase) -> TelemetryEvent {
        TelemetryEvent {
            seq,
            t_s,
            kind: EventKind::PhaseChange {
                phase_from: from,
                phase_to: to,
                site_index: 0,
            },
        }
    }

    fn assay_event(seq: u64, kind: TestKind, verdict: Verdict) -> TelemetryEvent {
        TelemetryEvent {
            seq,
            t_s: seq as f64,
            kind: EventKind::AssayResultEvent(AssayResult {
                test_kind: kind,
                verdict,
                band: None,
                hue_distance_deg: Some(1.0),
                site_id: 0,
            }),
        }
    }

    #[test]
    fn encoding_is_one_canonical_sorted_line() {
        let event = phase_event(0, 0.0, MissionPhase::Idle, MissionPhase::Deploying);
        let line = encode_event(&event).unwrap();
        assert_eq!(
            line,
            "{\"kind\":\"PhaseChange\",\"payload\":{\"phase_from\":\"Idle\",\
             \"phase_to\":\"Deploying\",\"site_index\":0},\"seq\":0,\"t_s\":0.0}\n"
        );
        assert!(line.contains("\"phase_from\":\"Idle\""));
        assert_eq!(line.matches('\n').count(), 1);
        assert_eq!(encode_event(&event).unwrap(), line);
    }

    #[test]
    fn decode_inverts_encode() {
        let events = [
            phase_event(3, 1.5, MissionPhase::Ranging, MissionPhase::DrillDescent),
            TelemetryEvent {
                seq: 4,
                t_s: 1.5,
                kind: EventKind::SensorReading {
                    sensor: "ultrasonic".into(),
                    value: None,
                },
            },
            TelemetryEvent {
                seq: 5,
                t_s: 1.6,
                kind: EventKind::ActuatorCommand {
                    actuator: Actuator::Drill,
                    in1: true,
                    in2: false,
                    duty: 1.0,
                },
            },
        ];
        for event in &events {
            let line = encode_event(event).unwrap();
            let back = decode_event(&line, None).unwrap();
            assert_eq!(&back, event);
        }
    }

    #[test]
    fn bad_lines_name_the_problem_and_the_line() {
        let err = decode_event("", Some(7)).unwrap_err();
        assert_eq!(err.to_string(), "parse error at line 7: empty line");

        let bogus = r#"{"kind":"Zap","payload":{},"seq":0,"t_s":0.0}"#;
        let err = decode_event(bogus, None).unwrap_err();
        assert!(err.to_string().contains("Zap"), "got: {err}");

        let text = "{\"kind\":\"FaultEvent\",\"payload\":{\"reason\":\"x\",\"site_index\":0},\"seq\":0,\"t_s\":0.0}\n\nmore";
        let err = decode_stream(text).unwrap_err();
        assert!(err.to_string().starts_with("parse error at line 2"), "got: {err}");
    }

    #[test]
    fn non_finite_numbers_do_not_encode() {
        let event = TelemetryEvent {
            seq: 0,
            t_s: f64::NAN,
            kind: EventKind::SensorReading {
                sensor: "ultrasonic".into(),
                value: Some(0.1),
            },
        };
        assert!(matches!(encode_event(&event), Err(Error::Encode(_))));
    }

    #[test]
    fn empty_stream_aggregates_to_zero_counts() {
        let agg = aggregate_report(&[]).unwrap();
        assert_eq!(agg.report, MissionReport::empty());
        assert_eq!(agg.event_count, 0);
        assert!(agg.integrity_ok());
        assert!(agg.embedded.is_none());
    }

    #[test]
    fn aggregation_recomputes_counts_and_matches_honest_report() {
        let mut events = vec![
            phase_event(0, 0.0, MissionPhase::Idle, MissionPhase::Deploying),
            assay_event(1, TestKind::Protein, Verdict::Positive),
            assay_event(2, TestKind::Carbohydrate, Verdict::Positive),
            assay_event(3, TestKind::Protein, Verdict::Negative),
            assay_event(4, TestKind::Carbohydrate, Verdict::Indeterminate),
            phase_event(5, 9.0, MissionPhase::SiteAdvance, MissionPhase::Complete),
        ];
        let honest = MissionReport {
            sites_visited: 1,
            protein_positive_count: 1,
            carb_positive_count: 1,
            indeterminate_count: 1,
            chamber_reuse_count: 0,
            total_sim_time_s: 9.5,
            end_phase: MissionPhase::Complete,
            fault_reason: None,
            results: Vec::new(),
        };
        events.push(TelemetryEvent {
            seq: 6,
            t_s: 9.5,
            kind: EventKind::ReportEvent(honest.clone()),
        });

        let agg = aggregate_report(&events).unwrap();
        assert!(agg.integrity_ok(), "mismatches: {:?}", agg.mismatches);
        assert_eq!(agg.report.protein_positive_count, 1);
        assert_eq!(agg.report.carb_positive_count, 1);
        assert_eq!(agg.report.indeterminate_count, 1);
        assert_eq!(agg.report.sites_visited, 1);
        assert_eq!(agg.report.end_phase, MissionPhase::Complete);
        assert_eq!(agg.report.results.len(), 4);
        assert_eq!(agg.embedded.unwrap(), honest);
    }

    #[test]
    fn dishonest_embedded_report_is_flagged_not_erred() {
        let events = vec![
            assay_event(0, TestKind::Protein, Verdict::Positive),
            TelemetryEvent {
                seq: 1,
                t_s: 2.0,
                kind: EventKind::ReportEvent(MissionReport {
                    protein_positive_count: 5,
                    ..MissionReport::empty()
                }),
            },
        ];
        let agg = aggregate_report(&events).unwrap();
        assert!(!agg.integrity_ok());
        assert!(agg.mismatches.iter().any(|m| m.contains("protein_positive_count")));
    }

    #[test]
    fn out_of_order_streams_are_integrity_errors() {
        let events = vec![
            assay_event(2, TestKind::Protein, Verdict::Positive),
            assay_event(2, TestKind::Protein, Verdict::Positive),
        ];
        assert!(matches!(
            aggregate_report(&events),
            Err(Error::Integrity(_))
        ));

        let mut events = vec![
            assay_event(0, TestKind::Protein, Verdict::Positive),
            assay_event(1, TestKind::Protein, Verdict::Positive),
        ];
        events[1].t_s = -1.0;
        assert!(matches!(
            aggregate_report(&events),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn aggregation_folds_over_concatenation() {
        let a = vec![
            assay_event(0, TestKind::Protein, Verdict::Positive),
            assay_event(1, TestKind::Carbohydrate, Verdict::Positive),
        ];
        let b = vec![
            assay_event(0, TestKind::Protein, Verdict::Negative),
            assay_event(1, TestKind::Carbohydrate, Verdict::Positive),
        ];
        let mut joined = a.clone();
        for (i, mut event) in b.clone().into_iter().enumerate() {
            event.seq = 2 + i as u64;
            event.t_s += 10.0;
            joined.push(event);
        }
        let ca = aggregate_report(&a).unwrap().report;
        let cb = aggregate_report(&b).unwrap().report;
        let cj = aggregate_report(&joined).unwrap().report;
        assert_eq!(
            cj.protein_positive_count,
            ca.protein_positive_count + cb.protein_positive_count
        );
        assert_eq!(
            cj.carb_positive_count,
            ca.carb_positive_count + cb.carb_positive_count
        );
        assert_eq!(
            cj.indeterminate_count,
            ca.indeterminate_count + cb.indeterminate_count
        );
    }

    mod round_trip {
        use super::*;
        use crate::assay::Band;
        use proptest::prelude::*;

        fn arb_phase() -> impl Strategy<Value = MissionPhase> {
            prop::sample::select(MissionPhase::ALL.to_vec())
        }

        fn arb_result() -> impl Strategy<Value = AssayResult> {
            (
                prop::bool::ANY,
                prop::sample::select(vec![
                    Verdict::Positive,
                    Verdict::Negative,
                    Verdict::Indeterminate,
                ]),
                prop::option::of(prop::sample::select(vec![
                    Band::Blue,
                    Band::Green,
                    Band::Yellow,
                    Band::BrickRed,
                ])),
                prop::option::of(0.0..180.0f64),
                0u32..32,
            )
                .prop_map(|(protein, verdict, band, dist, site)| AssayResult {
                    test_kind: if protein {
                        TestKind::Protein
                    } else {
                        TestKind::Carbohydrate
                    },
                    verdict,
                    band,
                    hue_distance_deg: dist,
                    site_id: site,
                })
        }

        fn arb_kind() -> impl Strategy<Value = EventKind> {
            prop_oneof![
                (1u32..3, 0u64..1000, 1e-3..1.0f64, 1u32..20).prop_map(
                    |(schema_version, seed, dt_s, n_sites)| EventKind::Header {
                        schema_version,
                        seed,
                        dt_s,
                        n_sites,
                    }
                ),
                (arb_phase(), arb_phase(), 0u32..16).prop_map(|(phase_from, phase_to, site_index)| {
                    EventKind::PhaseChange {
                        phase_from,
                        phase_to,
                        site_index,
                    }
                }),
                ("[a-z_]{1,12}", prop::option::of(0.0..5.0f64))
                    .prop_map(|(sensor, value)| EventKind::SensorReading { sensor, value }),
                (
                    prop::sample::select(Actuator::ALL.to_vec()),
                    prop::bool::ANY,
                    prop::bool::ANY,
                    0.0..=1.0f64
                )
                    .prop_map(|(actuator, in1, in2, duty)| EventKind::ActuatorCommand {
                        actuator,
                        in1,
                        in2,
                        duty,
                    }),
                arb_result().prop_map(EventKind::AssayResultEvent),
                ("[a-z ]{1,24}", 0u32..16).prop_map(|(reason, site_index)| EventKind::FaultEvent {
                    reason,
                    site_index,
                }),
                (
                    0u32..20,
                    0u32..20,
                    0u32..20,
                    0u32..20,
                    0u32..60,
                    0.0..5000.0f64,
                    arb_phase(),
                    prop::option::of("[a-z ]{1,16}"),
                    prop::collection::vec(arb_result(), 0..3),
                )
                    .prop_map(
                        |(sites, p, c, ind, reuse, t, end, reason, results)| {
                            EventKind::ReportEvent(MissionReport {
                                sites_visited: sites,
                                protein_positive_count: p,
                                carb_positive_count: c,
                                indeterminate_count: ind,
                                chamber_reuse_count: reuse,
                                total_sim_time_s: t,
                                end_phase: end,
                                fault_reason: reason,
                                results,
                            })
                        }
                    ),
            ]
        }

        pub(super) fn arb_event() -> impl Strategy<Value = TelemetryEvent> {
            (0u64..u64::MAX / 2, 0.0..1e6f64, arb_kind()).prop_map(|(seq, t_s, kind)| {
                TelemetryEvent { seq, t_s, kind }
            })
        }

        proptest! {
            #[test]
            fn decode_encode_is_identity(event in arb_event()) {
                let line = encode_event(&event).unwrap();
                prop_assert!(line.ends_with('\n'));
                prop_assert_eq!(line.matches('\n').count(), 1);
                let back = decode_event(&line, None).unwrap();
                prop_assert_eq!(back, event);
            }

            #[test]
            fn encoding_is_stable_bytes(event in arb_event()) {
                prop_assert_eq!(encode_event(&event).unwrap(), encode_event(&event).unwrap());
            }
        }
    }
}
