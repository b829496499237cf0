//! The `metrics.csv` schema.

use std::io::Write;

use dsac::IterationMetrics;

/// Column names, in file order, for `n` agents.
pub fn header(n: usize) -> Vec<String> {
    let mut cols = vec!["k".to_string(), "global_utility".to_string()];
    cols.extend((0..n).map(|i| format!("utility_agent_{i}")));
    cols.push("consensus_error".into());
    cols.push("grad_norm_sq".into());
    cols.extend((0..n).map(|i| format!("constraint_gap_agent_{i}")));
    cols.extend((0..n).map(|i| format!("entropy_agent_{i}")));
    for c in ["eta_theta", "eta_w", "B", "H", "wall_ms"] {
        cols.push(c.into());
    }
    cols
}

/// One row. Floats use Rust's shortest round-trip formatting, so files are
/// locale-independent and parse back to the same bits; variants without a
/// constraint write `NaN`.
pub fn row(m: &IterationMetrics, wall_clock: bool) -> Vec<String> {
    let f = |x: f64| format!("{x}");
    let mut out = vec![m.k.to_string(), f(m.global_utility)];
    out.extend(m.utility.iter().copied().map(f));
    out.push(f(m.consensus_error));
    out.push(f(m.grad_norm_sq));
    out.extend(m.constraint_gap.iter().copied().map(f));
    out.extend(m.entropy.iter().copied().map(f));
    out.push(f(m.params.eta_theta));
    out.push(f(m.params.eta_w));
    out.push(m.params.batch.to_string());
    out.push(m.params.horizon.to_string());
    out.push(f(if wall_clock { m.wall_ms } else { 0.0 }));
    out
}

pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
    wall_clock: bool,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(sink: W, n_agents: usize, wall_clock: bool) -> csv::Result<Self> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
        inner.write_record(header(n_agents))?;
        Ok(MetricsWriter { inner, wall_clock })
    }

    pub fn write(&mut self, m: &IterationMetrics) -> csv::Result<()> {
        self.inner.write_record(row(m, self.wall_clock))
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_order() {
        assert_eq!(
            header(2).join(","),
            "k,global_utility,utility_agent_0,utility_agent_1,consensus_error,grad_norm_sq,\
             constraint_gap_agent_0,constraint_gap_agent_1,entropy_agent_0,entropy_agent_1,\
             eta_theta,eta_w,B,H,wall_ms"
        );
    }
}
