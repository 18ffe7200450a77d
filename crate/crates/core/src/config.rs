//! Run configuration: a flat key-value text format naming built-in problem
//! functions with parameter lists, plus grid, schedule and strip settings.
//! No expression parsing; every function is one of the named built-ins.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::funcs::Func2;
use crate::grid::Grid2D;
use crate::nashmoser::Schedule;
use crate::problem::{metric_to_problem, MetricSpec, Mode, ProblemSpec};
use crate::strip::StripParams;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub k: Func2,
    pub metric: Option<MetricSpec>,
    pub epsilon: f64,
    pub x0: f64,
    pub y0: f64,
    pub nx: usize,
    pub ny: usize,
    pub schedule: Schedule,
    pub strip: StripParams,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Curvature,
            k: Func2::ModelCurvature,
            metric: None,
            epsilon: 0.05,
            x0: 1.0,
            y0: 1.0,
            nx: 65,
            ny: 65,
            schedule: Schedule::default(),
            strip: StripParams::default(),
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut cfg = RunConfig::default();
        let get_f64 = |map: &BTreeMap<String, String>, key: &str, default: f64| -> Result<f64> {
            match map.get(key) {
                Some(v) => v.parse::<f64>().map_err(|_| Error::Config(format!("{key}: bad number '{v}'"))),
                None => Ok(default),
            }
        };
        if let Some(mode) = map.get("mode") {
            cfg.mode = match mode.as_str() {
                "curvature" => Mode::Curvature,
                "embedding" => Mode::Embedding,
                other => return Err(Error::Config(format!("mode: unknown '{other}'"))),
            };
        }
        if let Some(spec) = map.get("K") {
            cfg.k = parse_func2("K", spec)?;
        }
        let need_metric = cfg.mode == Mode::Embedding;
        if need_metric || map.contains_key("E") {
            let comp = |key: &str| -> Result<Func2> {
                match map.get(key) {
                    Some(spec) => parse_func2(key, spec),
                    None => Err(Error::Config(format!("{key}: required in embedding mode"))),
                }
            };
            if need_metric {
                cfg.metric = Some(MetricSpec { e: comp("E")?, f: comp("F")?, g: comp("G")? });
            }
        }
        cfg.epsilon = get_f64(&map, "epsilon", cfg.epsilon)?;
        cfg.x0 = get_f64(&map, "x0", cfg.x0)?;
        cfg.y0 = get_f64(&map, "y0", cfg.y0)?;
        if let Some(gspec) = map.get("grid") {
            let parts: Vec<&str> = gspec.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::Config("grid: expected 'NX NY'".into()));
            }
            cfg.nx = parts[0].parse().map_err(|_| Error::Config("grid: bad NX".into()))?;
            cfg.ny = parts[1].parse().map_err(|_| Error::Config("grid: bad NY".into()))?;
        }
        cfg.schedule.mu = get_f64(&map, "mu", cfg.schedule.mu)?;
        cfg.schedule.tau = get_f64(&map, "tau", cfg.schedule.tau)?;
        if let Some(v) = map.get("n0") {
            cfg.schedule.n0 = v.parse().map_err(|_| Error::Config("n0: bad integer".into()))?;
        }
        cfg.schedule.theta0 = get_f64(&map, "theta0", cfg.schedule.theta0)?;
        cfg.schedule.theta_decay = get_f64(&map, "theta_decay", cfg.schedule.theta_decay)?;
        if let Some(v) = map.get("max_iter") {
            cfg.schedule.max_iter = v.parse().map_err(|_| Error::Config("max_iter: bad integer".into()))?;
        }
        cfg.schedule.tol_abs = get_f64(&map, "tol", cfg.schedule.tol_abs)?;
        if let Some(v) = map.get("s_star") {
            cfg.schedule.s_star = v.parse().map_err(|_| Error::Config("s_star: bad integer".into()))?;
        }
        cfg.strip.y0 = cfg.y0;
        cfg.strip.y1 = get_f64(&map, "strip_y1", cfg.strip.y1)?;
        cfg.strip.y2 = get_f64(&map, "strip_y2", cfg.strip.y2)?;
        cfg.strip.y3 = get_f64(&map, "strip_y3", cfg.strip.y3)?;
        cfg.strip.big_y = get_f64(&map, "strip_Y", cfg.strip.big_y)?;
        cfg.strip.delta = get_f64(&map, "strip_delta", cfg.strip.delta)?;
        if let Some(v) = map.get("seed") {
            cfg.seed = v.parse().map_err(|_| Error::Config("seed: bad integer".into()))?;
        }
        Ok(cfg)
    }

    /// Serializes back to the flat format; load(write(c)) == c.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mode = match self.mode {
            Mode::Curvature => "curvature",
            Mode::Embedding => "embedding",
        };
        out.push_str(&format!("mode = {mode}\n"));
        out.push_str(&format!("K = {}\n", render_func2(&self.k)));
        if let Some(m) = &self.metric {
            out.push_str(&format!("E = {}\n", render_func2(&m.e)));
            out.push_str(&format!("F = {}\n", render_func2(&m.f)));
            out.push_str(&format!("G = {}\n", render_func2(&m.g)));
        }
        out.push_str(&format!("epsilon = {:.17e}\n", self.epsilon));
        out.push_str(&format!("x0 = {:.17e}\n", self.x0));
        out.push_str(&format!("y0 = {:.17e}\n", self.y0));
        out.push_str(&format!("grid = {} {}\n", self.nx, self.ny));
        out.push_str(&format!("mu = {:.17e}\n", self.schedule.mu));
        out.push_str(&format!("tau = {:.17e}\n", self.schedule.tau));
        out.push_str(&format!("n0 = {}\n", self.schedule.n0));
        out.push_str(&format!("theta0 = {:.17e}\n", self.schedule.theta0));
        out.push_str(&format!("theta_decay = {:.17e}\n", self.schedule.theta_decay));
        out.push_str(&format!("max_iter = {}\n", self.schedule.max_iter));
        out.push_str(&format!("tol = {:.17e}\n", self.schedule.tol_abs));
        out.push_str(&format!("s_star = {}\n", self.schedule.s_star));
        out.push_str(&format!("strip_y1 = {:.17e}\n", self.strip.y1));
        out.push_str(&format!("strip_y2 = {:.17e}\n", self.strip.y2));
        out.push_str(&format!("strip_y3 = {:.17e}\n", self.strip.y3));
        out.push_str(&format!("strip_Y = {:.17e}\n", self.strip.big_y));
        out.push_str(&format!("strip_delta = {:.17e}\n", self.strip.delta));
        out.push_str(&format!("seed = {}\n", self.seed));
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::centered(self.x0, self.y0, self.nx, self.ny)
    }

    /// The problem before normalization.
    pub fn problem(&self) -> Result<ProblemSpec> {
        match self.mode {
            Mode::Curvature => {
                Ok(ProblemSpec::curvature(self.k.clone(), self.epsilon, self.x0, self.y0))
            }
            Mode::Embedding => {
                let m = self
                    .metric
                    .as_ref()
                    .ok_or_else(|| Error::Config("embedding mode needs E, F, G".into()))?;
                metric_to_problem(m, self.epsilon, self.x0, self.y0)
            }
        }
    }
}

fn parse_func2(key: &str, spec: &str) -> Result<Func2> {
    let mut tokens = spec.split_whitespace();
    let name = tokens.next().ok_or_else(|| Error::Config(format!("{key}: empty function spec")))?;
    let rest: Vec<&str> = tokens.collect();
    let nums = |rest: &[&str]| -> Result<Vec<f64>> {
        rest.iter()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("{key}: bad number '{t}'"))))
            .collect()
    };
    match name {
        "zero" => Ok(Func2::Zero),
        "one" => Ok(Func2::Const { value: 1.0 }),
        "const" => {
            let v = nums(&rest)?;
            if v.len() != 1 {
                return Err(Error::Config(format!("{key}: const takes one value")));
            }
            Ok(Func2::Const { value: v[0] })
        }
        "linear" => {
            let v = nums(&rest)?;
            if v.len() != 2 {
                return Err(Error::Config(format!("{key}: linear takes cu cv")));
            }
            Ok(Func2::Linear { cu: v[0], cv: v[1] })
        }
        "quadratic" => {
            let v = nums(&rest)?;
            if v.len() != 3 {
                return Err(Error::Config(format!("{key}: quadratic takes cuu cuv cvv")));
            }
            Ok(Func2::Quadratic { cuu: v[0], cuv: v[1], cvv: v[2] })
        }
        "model" => Ok(Func2::ModelCurvature),
        "exp" => {
            let v = nums(&rest)?;
            if v.len() != 2 {
                return Err(Error::Config(format!("{key}: exp takes cu cv")));
            }
            Ok(Func2::Exp { cu: v[0], cv: v[1] })
        }
        "poly" => {
            // triples c:a:b
            let mut terms = Vec::new();
            for t in &rest {
                let parts: Vec<&str> = t.split(':').collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!("{key}: poly term '{t}' must be c:a:b")));
                }
                let c: f64 = parts[0].parse().map_err(|_| Error::Config(format!("{key}: bad coefficient '{t}'")))?;
                let a: u32 = parts[1].parse().map_err(|_| Error::Config(format!("{key}: bad power '{t}'")))?;
                let b: u32 = parts[2].parse().map_err(|_| Error::Config(format!("{key}: bad power '{t}'")))?;
                terms.push((c, a, b));
            }
            Ok(Func2::Poly { terms })
        }
        other => Err(Error::Config(format!("{key}: unknown function '{other}'"))),
    }
}

fn render_func2(f: &Func2) -> String {
    match f {
        Func2::Zero => "zero".into(),
        Func2::Const { value } if *value == 1.0 => "one".into(),
        Func2::Const { value } => format!("const {value:.17e}"),
        Func2::Linear { cu, cv } => format!("linear {cu:.17e} {cv:.17e}"),
        Func2::Quadratic { cuu, cuv, cvv } => format!("quadratic {cuu:.17e} {cuv:.17e} {cvv:.17e}"),
        Func2::ModelCurvature => "model".into(),
        Func2::Exp { cu, cv } => format!("exp {cu:.17e} {cv:.17e}"),
        Func2::Poly { terms } => {
            let body: Vec<String> =
                terms.iter().map(|(c, a, b)| format!("{c:.17e}:{a}:{b}")).collect();
            format!("poly {}", body.join(" "))
        }
        other => panic!("function {other:?} has no config syntax"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_curvature() {
        let cfg = RunConfig::parse(
            "mode = curvature\nK = quadratic 1 0 -1\nepsilon = 0.05\ngrid = 33 33\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Curvature);
        assert_eq!(cfg.k, Func2::Quadratic { cuu: 1.0, cuv: 0.0, cvv: -1.0 });
        assert_eq!((cfg.nx, cfg.ny), (33, 33));
    }

    #[test]
    fn parse_comments_and_defaults() {
        let cfg = RunConfig::parse("# model run\nK = model # exact data\n").unwrap();
        assert_eq!(cfg.k, Func2::ModelCurvature);
        assert_eq!(cfg.epsilon, 0.05);
        assert_eq!(cfg.schedule.mu, 6.0);
    }

    #[test]
    fn parse_embedding_metric() {
        let text = "mode = embedding\nE = one\nF = zero\nG = poly 1:0:0 0.166:4:0 -1:2:2\n";
        let cfg = RunConfig::parse(text).unwrap();
        let m = cfg.metric.unwrap();
        assert_eq!(m.e, Func2::Const { value: 1.0 });
        assert!(matches!(m.g, Func2::Poly { .. }));
    }

    #[test]
    fn bad_keys_name_the_field() {
        let err = RunConfig::parse("epsilon = abc\n").unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        let err = RunConfig::parse("K = fourier 1 2\n").unwrap_err();
        assert!(err.to_string().contains("K"), "{err}");
        let err = RunConfig::parse("mode = embedding\n").unwrap_err();
        assert!(err.to_string().contains('E'), "{err}");
    }

    #[test]
    fn render_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.k = Func2::Quadratic { cuu: 1.0, cuv: 0.5, cvv: -2.0 };
        cfg.schedule.theta0 = 1e-4;
        cfg.seed = 7;
        let text = cfg.render();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back.k, cfg.k);
        assert_eq!(back.schedule.theta0, cfg.schedule.theta0);
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.render(), text);
    }
}
