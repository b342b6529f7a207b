use super::EpisodeLog;

/// Bumped whenever a column is renamed, removed or reordered.
pub const CSV_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 18] = [
    "t",
    "agent",
    "service",
    "node",
    "replicas",
    "placed",
    "available_nodes",
    "action",
    "rejected",
    "error",
    "load_rps",
    "latency_ms",
    "throughput_rps",
    "energy_j",
    "quality_level",
    "slo_ok",
    "surprise",
    "efe",
];

impl EpisodeLog {
    /// One row per agent per step. `slo_ok` lists `id:1` for fulfilled and
    /// `id:0` for violated SLOs; `efe` lists `action=total` pairs when
    /// recorded.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.records {
            for a in &r.agents {
                let slo_ok: Vec<String> = a
                    .slos
                    .iter()
                    .map(|(id, ok, _)| format!("{id}:{}", u8::from(*ok)))
                    .collect();
                let efe: Vec<String> = a
                    .efe
                    .iter()
                    .map(|b| format!("{}={}", b.action, b.total))
                    .collect();
                let m = &a.metrics;
                w.write_record([
                    r.t.to_string(),
                    a.agent.clone(),
                    a.service.clone(),
                    a.node.clone(),
                    a.replicas.to_string(),
                    u8::from(a.placed).to_string(),
                    r.available_nodes.to_string(),
                    a.action.to_string(),
                    a.rejected.clone().unwrap_or_default(),
                    a.error.clone().unwrap_or_default(),
                    m.load_rps.to_string(),
                    m.latency_ms.to_string(),
                    m.throughput_rps.to_string(),
                    m.energy_j.to_string(),
                    m.quality_level.to_string(),
                    slo_ok.join(";"),
                    a.surprise.map(|s| s.to_string()).unwrap_or_default(),
                    efe.join("|"),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are utf-8")
    }
}
