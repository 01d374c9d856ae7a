use super::metrics::LearnerMetrics;

pub const DEFAULT_SUMMARY_CHARS: usize = 800;
pub const NO_ACTIVITY: &str = "No prior activity recorded for this learner.";

/// Renders metrics as a short prompt-ready paragraph of at most `max_chars`
/// characters. Only numeric fields are used; the pseudonym is omitted.
pub fn context_summary(metrics: &LearnerMetrics, max_chars: usize) -> String {
    let text = if metrics.is_empty() {
        NO_ACTIVITY.to_string()
    } else {
        let mut parts = Vec::new();
        let minutes = metrics.time_spent_s / 60;
        parts.push(format!(
            "Engagement: about {minutes} min of active time, {} lecture material views, {} code runs.",
            metrics.lecture_access_count, metrics.attempt_count
        ));
        match metrics.success_rate {
            None => parts.push("Performance: no attempts yet.".to_string()),
            Some(rate) => {
                let passed = rate * crate::Rational::integer(metrics.attempt_count as i64);
                parts.push(format!(
                    "Performance: success rate {}% ({} of {} runs passed all tests).",
                    rate.percent_rounded(),
                    passed,
                    metrics.attempt_count
                ));
            }
        }
        let e = &metrics.error_pattern_counts;
        if e.total() > 0 {
            parts.push(format!(
                "Error patterns: {} wrong output, {} timeout, {} runtime error, {} runner error.",
                e.wrong_output, e.timeout, e.runtime_error, e.runner_error
            ));
        }
        if let Some(t) = metrics.last_active {
            parts.push(format!("Last active {t}."));
        }
        parts.join(" ")
    };
    truncate_chars(&text, max_chars)
}

/// Cuts to at most `max` characters, marking the cut with an ellipsis.
pub fn truncate_chars(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        return text.to_string();
    }
    if max == 0 {
        return String::new();
    }
    let mut out: String = text.chars().take(max - 1).collect();
    out.push('…');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lace::metrics::{ErrorPatternCounts, Scope};
    use crate::Rational;
    use proptest::prelude::*;

    fn metrics(attempts: u64, rate: Option<Rational>) -> LearnerMetrics {
        LearnerMetrics {
            actor_pseudonym: "123".into(),
            scope: Scope::Global,
            time_spent_s: 600,
            attempt_count: attempts,
            success_rate: rate,
            error_pattern_counts: ErrorPatternCounts { wrong_output: 3, ..Default::default() },
            lecture_access_count: 2,
            last_active: None,
        }
    }

    #[test]
    fn zero_metrics() {
        let m = LearnerMetrics {
            actor_pseudonym: "1".into(),
            scope: Scope::Global,
            time_spent_s: 0,
            attempt_count: 0,
            success_rate: None,
            error_pattern_counts: ErrorPatternCounts::default(),
            lecture_access_count: 0,
            last_active: None,
        };
        assert_eq!(context_summary(&m, DEFAULT_SUMMARY_CHARS), NO_ACTIVITY);
    }

    #[test]
    fn quarter_rate_renders_percent() {
        let s = context_summary(&metrics(4, Some(Rational::new(1, 4))), DEFAULT_SUMMARY_CHARS);
        assert!(s.contains("25%"), "{s}");
        assert!(s.contains("1 of 4"));
        assert!(!s.contains("123"));
    }

    proptest! {
        #[test]
        fn never_exceeds_budget(attempts in 0u64..10_000, passed in 0u64..10_000, max in 0usize..400) {
            let rate = (attempts > 0).then(|| Rational::new((passed % (attempts + 1)) as i64, attempts as i64));
            let s = context_summary(&metrics(attempts, rate), max);
            prop_assert!(s.chars().count() <= max);
        }
    }
}
