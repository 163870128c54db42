use std::fmt::Write;

use photoba::ba::LevelReport;

/// Outcome of one `refine` run. Written twice: line-oriented text for
/// people and diffing, JSON for tools.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: String,
    pub sensors: Vec<String>,
    pub fusion: Option<String>,
    pub frames: usize,
    pub edges: usize,
    pub initial_ate: Option<f64>,
    pub final_ate: Option<f64>,
    pub load_seconds: f64,
    pub levels: Vec<LevelReport>,
    /// Sensor(s) behind each entry of `levels`.
    pub stages: Vec<String>,
    /// Effective manifest, TOML.
    pub config: String,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.9}"))
}

impl RunReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames {} edges {}", self.frames, self.edges);
        for (l, stage) in self.levels.iter().zip(&self.stages) {
            let _ = writeln!(
                s,
                "{stage} level {} scale {} iterations {} error {:.6e} -> {:.6e} ({:.2}s)",
                l.level,
                l.scale,
                l.iterations,
                l.initial_error(),
                l.final_error(),
                l.seconds
            );
        }
        if let (Some(a), Some(b)) = (self.initial_ate, self.final_ate) {
            let _ = writeln!(s, "ate {a:.6} -> {b:.6} ({:.1}% of initial)", 100.0 * b / a);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "manifest {}", self.manifest);
        let _ = writeln!(s, "sensors {}", self.sensors.join(","));
        if let Some(f) = &self.fusion {
            let _ = writeln!(s, "fusion {f}");
        }
        let _ = writeln!(s, "frames {}", self.frames);
        let _ = writeln!(s, "edges {}", self.edges);
        let _ = writeln!(s, "initial_ate {}", opt(self.initial_ate));
        let _ = writeln!(s, "final_ate {}", opt(self.final_ate));
        let _ = writeln!(s, "load_seconds {:.3}", self.load_seconds);
        for (l, stage) in self.levels.iter().zip(&self.stages) {
            let _ = writeln!(
                s,
                "stage {stage} level {} scale {} iterations {} seconds {:.3}",
                l.level, l.scale, l.iterations, l.seconds
            );
            let trace: Vec<String> = l.trace.iter().map(|e| format!("{e:.12e}")).collect();
            let _ = writeln!(s, "trace {}", trace.join(" "));
        }
        for (l, stage) in self.levels.iter().zip(&self.stages) {
            for r in &l.records {
                let _ = writeln!(s, "{stage} {r}");
            }
        }
        s.push_str("# config\n");
        for line in self.config.lines() {
            let _ = writeln!(s, "# {line}");
        }
        s
    }

    pub fn to_json(&self) -> String {
        let levels: Vec<_> = self
            .levels
            .iter()
            .zip(&self.stages)
            .map(|(l, stage)| {
                serde_json::json!({
                    "stage": stage,
                    "level": l.level,
                    "scale": l.scale,
                    "iterations": l.iterations,
                    "seconds": l.seconds,
                    "trace": l.trace,
                    "records": l.records.iter().map(|r| serde_json::json!({
                        "iteration": r.iteration,
                        "lambda": r.lambda,
                        "error": r.error,
                        "valid_blocks": r.valid_blocks,
                        "accepted": r.accepted,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        let v = serde_json::json!({
            "manifest": self.manifest,
            "sensors": self.sensors,
            "fusion": self.fusion,
            "frames": self.frames,
            "edges": self.edges,
            "initial_ate": self.initial_ate,
            "final_ate": self.final_ate,
            "load_seconds": self.load_seconds,
            "levels": levels,
            "config": self.config,
        });
        let mut out = serde_json::to_string_pretty(&v).expect("report values serialize");
        out.push('\n');
        out
    }
}
