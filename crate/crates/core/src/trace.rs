//! Optimization traces: sequences of (KL, d, proxy score, gold score) points.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptMethod {
    Bon,
    Rl,
}

impl fmt::Display for OptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptMethod::Bon => write!(f, "bon"),
            OptMethod::Rl => write!(f, "rl"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Best-of-n `n`, or the RL step index.
    pub step_or_n: u64,
    pub kl_nats: f64,
    /// `sqrt(kl_nats)`.
    pub d: f64,
    pub proxy_score: f64,
    pub gold_score: f64,
    /// Across-context standard errors; zero for exact (RL) traces.
    pub proxy_se: f64,
    pub gold_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub method: OptMethod,
    pub experiment_id: String,
    pub seed: u64,
    pub points: Vec<TracePoint>,
}

impl OptimizationTrace {
    /// `(d, gold_score)` pairs, the inputs of the scaling-law fits.
    pub fn gold_points(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.d, p.gold_score)).collect()
    }

    pub fn proxy_points(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.d, p.proxy_score)).collect()
    }

    /// Column name of the first axis: `n` for best-of-n, `step` for RL.
    fn step_column(&self) -> &'static str {
        match self.method {
            OptMethod::Bon => "n",
            OptMethod::Rl => "step",
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(&format!(
            "experiment_id,method,{},kl_nats,d,proxy_score,gold_score,seed,proxy_se,gold_se\n",
            self.step_column()
        ));
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                self.experiment_id,
                self.method,
                p.step_or_n,
                p.kl_nats,
                p.d,
                p.proxy_score,
                p.gold_score,
                self.seed,
                p.proxy_se,
                p.gold_se
            ));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<OptimizationTrace> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let step_col = col("n").or_else(|| col("step")).ok_or_else(|| {
            Error::Usage("trace file missing column `n` or `step`".into())
        })?;
        let need = |name: &str| -> Result<usize> {
            col(name).ok_or_else(|| Error::Usage(format!("trace file missing column `{name}`")))
        };
        let id_col = need("experiment_id")?;
        let method_col = need("method")?;
        let kl_col = need("kl_nats")?;
        let d_col = need("d")?;
        let proxy_col = need("proxy_score")?;
        let gold_col = need("gold_score")?;
        let seed_col = need("seed")?;
        let proxy_se_col = col("proxy_se");
        let gold_se_col = col("gold_se");

        let mut method = None;
        let mut experiment_id = String::new();
        let mut seed = 0u64;
        let mut points = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let parse = |idx: usize| -> Result<f64> {
                row[idx]
                    .parse()
                    .map_err(|_| Error::Usage(format!("trace row {i}: bad number `{}`", &row[idx])))
            };
            if i == 0 {
                experiment_id = row[id_col].to_string();
                seed = row[seed_col]
                    .parse()
                    .map_err(|_| Error::Usage(format!("trace row {i}: bad seed")))?;
                method = Some(match &row[method_col] {
                    "bon" => OptMethod::Bon,
                    "rl" => OptMethod::Rl,
                    other => {
                        return Err(Error::Usage(format!("unknown trace method `{other}`")))
                    }
                });
            }
            points.push(TracePoint {
                step_or_n: row[step_col]
                    .parse()
                    .map_err(|_| Error::Usage(format!("trace row {i}: bad step/n")))?,
                kl_nats: parse(kl_col)?,
                d: parse(d_col)?,
                proxy_score: parse(proxy_col)?,
                gold_score: parse(gold_col)?,
                proxy_se: proxy_se_col.map(parse).transpose()?.unwrap_or(0.0),
                gold_se: gold_se_col.map(parse).transpose()?.unwrap_or(0.0),
            });
        }
        let method = method.ok_or_else(|| Error::Usage("trace file has no rows".into()))?;
        Ok(OptimizationTrace {
            method,
            experiment_id,
            seed,
            points,
        })
    }

    pub fn load(path: &Path) -> Result<OptimizationTrace> {
        OptimizationTrace::from_csv(&std::fs::read_to_string(path)?)
    }
}
