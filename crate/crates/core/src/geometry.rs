//! Box domains and collocation sampling.

use std::io::{self, Write};

use rand::distr::{Distribution, Open01, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("{0} sample count must be at least 1")]
    EmptySample(&'static str),
    #[error("initial samples need an unsteady domain")]
    SteadyDomain,
    #[error("boundary mask excludes every face for every field")]
    EverythingMasked,
    #[error("mask names face {face} but the domain has {faces} faces")]
    MaskFace { face: usize, faces: usize },
}

/// Axis-aligned box in space, optionally times `(0, T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t_end: Option<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, t_end: Option<f64>) -> Result<Self, GeometryError> {
        let d = Domain { lo, hi, t_end };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidDomain(m));
        if self.lo.len() != self.hi.len() || !(2..=3).contains(&self.lo.len()) {
            return bad(format!("need 2 or 3 axes, got {} and {}", self.lo.len(), self.hi.len()));
        }
        for (a, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return bad(format!("axis {a}: [{l}, {h}]"));
            }
        }
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("final time {t}"));
            }
        }
        Ok(())
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_unsteady(&self) -> bool {
        self.t_end.is_some()
    }

    /// Spatial dimension plus one for time.
    pub fn input_dim(&self) -> usize {
        self.dim() + usize::from(self.is_unsteady())
    }

    pub fn face_count(&self) -> usize {
        2 * self.dim()
    }

    /// Face `2a` is `x_a = lo`, face `2a + 1` is `x_a = hi`.
    pub fn face_normal(&self, face: usize) -> Vec<f64> {
        let mut n = vec![0.0; self.dim()];
        n[face / 2] = if face.is_multiple_of(2) { -1.0 } else { 1.0 };
        n
    }

    pub fn coordinate_names(&self) -> Vec<&'static str> {
        let mut v = ["x", "y", "z"][..self.dim()].to_vec();
        if self.is_unsteady() {
            v.push("t");
        }
        v
    }

    /// Closure membership of a point `[x.., t?]`.
    pub fn contains(&self, p: &[f64]) -> bool {
        let d = self.dim();
        let space = (0..d).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a]);
        match self.t_end {
            Some(t) => space && p[d] >= 0.0 && p[d] <= t,
            None => space,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Interior,
    Boundary,
    Initial,
}

/// Independent random streams so that changing one sample count does not
/// move the others.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Interior = 1,
    Boundary = 2,
    Initial = 3,
    Noise = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Field-value supervision attached to sampled points.
pub struct TargetFn<'a> {
    pub names: Vec<String>,
    pub f: &'a dyn Fn(&[f64]) -> Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub role: Role,
    pub coordinate_names: Vec<&'static str>,
    /// Row-major `n x input_dim`.
    pub points: Vec<f64>,
    /// Row-major `n x d` outward unit normals (boundary only).
    pub normals: Vec<f64>,
    /// Face index per point (boundary only).
    pub faces: Vec<usize>,
    /// Velocity supervision flag per point.
    pub velocity: Vec<bool>,
    /// Magnetic supervision flag per point.
    pub magnetic: Vec<bool>,
    /// Rows perturbed by [`apply_noise`].
    pub noisy: Vec<bool>,
    pub target_names: Vec<String>,
    /// Row-major `n x target_names.len()`.
    pub targets: Vec<f64>,
}

impl SampleBatch {
    fn empty(role: Role, domain: &Domain) -> Self {
        SampleBatch {
            role,
            coordinate_names: domain.coordinate_names(),
            points: Vec::new(),
            normals: Vec::new(),
            faces: Vec::new(),
            velocity: Vec::new(),
            magnetic: Vec::new(),
            noisy: Vec::new(),
            target_names: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.coordinate_names.len()
    }

    pub fn len(&self) -> usize {
        self.velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let k = self.input_dim();
        &self.points[i * k..(i + 1) * k]
    }

    pub fn normal(&self, i: usize) -> &[f64] {
        let d = self.normals.len() / self.len().max(1);
        &self.normals[i * d..(i + 1) * d]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        let k = self.target_names.len();
        &self.targets[i * k..(i + 1) * k]
    }

    fn fill_targets(&mut self, exact: Option<&TargetFn>) {
        if let Some(t) = exact {
            self.target_names = t.names.clone();
            self.targets = (0..self.len()).flat_map(|i| (t.f)(self.point(i))).collect();
            assert_eq!(self.targets.len(), self.len() * t.names.len(), "target closure arity");
        }
    }

    /// CSV with coordinate columns followed by target columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<&str> = self
            .coordinate_names
            .iter()
            .copied()
            .chain(self.target_names.iter().map(String::as_str))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .point(i)
                .iter()
                .chain(if self.targets.is_empty() { &[][..] } else { self.target(i) })
                .map(|v| format!("{v:e}"))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// One point per axis stratum, jittered uniformly inside the stratum.
fn stratified(rng: &mut ChaCha8Rng, n: usize, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let k = lo.len();
    let mut out = vec![0.0; n * k];
    let mut perm: Vec<usize> = (0..n).collect();
    for a in 0..k {
        perm.shuffle(rng);
        for (i, &s) in perm.iter().enumerate() {
            let u: f64 = rng.sample(Open01);
            out[i * k + a] = lo[a] + (s as f64 + u) / n as f64 * (hi[a] - lo[a]);
        }
    }
    out
}

/// Latin-hypercube interior points over space and, if present, time.
pub fn latin_hypercube(n: usize, domain: &Domain, seed: u64) -> Result<SampleBatch, GeometryError> {
    domain.validate()?;
    if n == 0 {
        return Err(GeometryError::EmptySample("interior"));
    }
    let (mut lo, mut hi) = (domain.lo.clone(), domain.hi.clone());
    if let Some(t) = domain.t_end {
        lo.push(0.0);
        hi.push(t);
    }
    let mut b = SampleBatch::empty(Role::Interior, domain);
    b.points = stratified(&mut stream_rng(seed, Stream::Interior), n, &lo, &hi);
    b.velocity = vec![false; n];
    b.magnetic = vec![false; n];
    b.noisy = vec![false; n];
    Ok(b)
}

/// Supervision rule for one face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceRule {
    pub face: usize,
    pub velocity: bool,
    pub magnetic: bool,
    /// Fraction range along the first tangential axis: dropped when
    /// `noisy` is false, perturbed when it is true.
    pub segment: Option<(f64, f64)>,
    pub noisy: bool,
}

impl FaceRule {
    fn full(face: usize) -> Self {
        FaceRule {
            face,
            velocity: true,
            magnetic: true,
            segment: None,
            noisy: false,
        }
    }

    fn off(face: usize) -> Self {
        FaceRule {
            velocity: false,
            magnetic: false,
            ..Self::full(face)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPreset {
    Standard,
    Right,
    UpperRight,
    UpperDown,
    Middle,
    Noisy,
    MiddleNoisy,
    Stagger,
}

impl MaskPreset {
    pub const ALL: [MaskPreset; 8] = [
        MaskPreset::Standard,
        MaskPreset::Right,
        MaskPreset::UpperRight,
        MaskPreset::UpperDown,
        MaskPreset::Middle,
        MaskPreset::Noisy,
        MaskPreset::MiddleNoisy,
        MaskPreset::Stagger,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskPreset::Standard => "standard",
            MaskPreset::Right => "right",
            MaskPreset::UpperRight => "upper_right",
            MaskPreset::UpperDown => "upper_down",
            MaskPreset::Middle => "middle",
            MaskPreset::Noisy => "noisy",
            MaskPreset::MiddleNoisy => "middle_noisy",
            MaskPreset::Stagger => "stagger",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Per-face, per-field supervision of boundary data.
///
/// Faces follow [`Domain::face_normal`]; in 2D they are left (inlet),
/// right, bottom, top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMask {
    pub rules: Vec<FaceRule>,
}

const LEFT: usize = 0;
const RIGHT: usize = 1;
const BOTTOM: usize = 2;
const TOP: usize = 3;
const MIDDLE_THIRD: (f64, f64) = (1.0 / 3.0, 2.0 / 3.0);

impl BoundaryMask {
    pub fn standard(faces: usize) -> Self {
        BoundaryMask {
            rules: (0..faces).map(FaceRule::full).collect(),
        }
    }

    pub fn preset(p: MaskPreset, faces: usize) -> Self {
        let mut m = Self::standard(faces);
        let r = &mut m.rules;
        match p {
            MaskPreset::Standard => {}
            MaskPreset::Right => r[RIGHT] = FaceRule::off(RIGHT),
            MaskPreset::UpperRight => {
                r[RIGHT] = FaceRule::off(RIGHT);
                r[TOP] = FaceRule::off(TOP);
            }
            MaskPreset::UpperDown => {
                r[BOTTOM] = FaceRule::off(BOTTOM);
                r[TOP] = FaceRule::off(TOP);
            }
            MaskPreset::Middle => r[LEFT].segment = Some(MIDDLE_THIRD),
            MaskPreset::Noisy => {
                r[BOTTOM] = FaceRule::off(BOTTOM);
                r[TOP] = FaceRule::off(TOP);
                r[LEFT].noisy = true;
                r[RIGHT].noisy = true;
            }
            MaskPreset::MiddleNoisy => {
                r[LEFT].segment = Some(MIDDLE_THIRD);
                r[LEFT].noisy = true;
            }
            MaskPreset::Stagger => {
                r[TOP].magnetic = false;
                r[BOTTOM].velocity = false;
            }
        }
        m
    }

    pub fn rule(&self, face: usize) -> Option<&FaceRule> {
        self.rules.iter().find(|r| r.face == face)
    }

    pub fn has_noise(&self) -> bool {
        self.rules.iter().any(|r| r.noisy)
    }
}

/// `per_face` points on every face the mask keeps, stratified along the
/// face; unsteady points get a uniform time in `(0, T]`.
pub fn sample_boundary(
    domain: &Domain,
    per_face: usize,
    mask: &BoundaryMask,
    exact: Option<&TargetFn>,
    seed: u64,
) -> Result<SampleBatch, GeometryError> {
    domain.validate()?;
    if per_face == 0 {
        return Err(GeometryError::EmptySample("boundary"));
    }
    let faces = domain.face_count();
    if let Some(r) = mask.rules.iter().find(|r| r.face >= faces) {
        return Err(GeometryError::MaskFace { face: r.face, faces });
    }
    if !mask.rules.iter().any(|r| r.velocity || r.magnetic) {
        return Err(GeometryError::EverythingMasked);
    }
    let d = domain.dim();
    let mut rng = stream_rng(seed, Stream::Boundary);
    let mut b = SampleBatch::empty(Role::Boundary, domain);
    for face in 0..faces {
        // Every face consumes the same draws whatever the mask says.
        let axis = face / 2;
        let tang: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
        let lo: Vec<f64> = tang.iter().map(|&a| domain.lo[a]).collect();
        let hi: Vec<f64> = tang.iter().map(|&a| domain.hi[a]).collect();
        let along = stratified(&mut rng, per_face, &lo, &hi);
        let times: Vec<f64> = match domain.t_end {
            Some(t) => {
                let u = Uniform::new_inclusive(0.0, t).expect("valid time range");
                (0..per_face)
                    .map(|_| {
                        let s: f64 = u.sample(&mut rng);
                        if s == 0.0 {
                            t
                        } else {
                            s
                        }
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        let Some(rule) = mask.rule(face) else { continue };
        if !(rule.velocity || rule.magnetic) {
            continue;
        }
        let normal = domain.face_normal(face);
        let wall = if face % 2 == 0 { domain.lo[axis] } else { domain.hi[axis] };
        for i in 0..per_face {
            let s = &along[i * (d - 1)..(i + 1) * (d - 1)];
            let frac = (s[0] - lo[0]) / (hi[0] - lo[0]);
            let in_segment = rule.segment.is_some_and(|(a, c)| frac >= a && frac <= c);
            if in_segment && !rule.noisy {
                continue;
            }
            let mut p = vec![0.0; d];
            p[axis] = wall;
            for (k, &a) in tang.iter().enumerate() {
                p[a] = s[k];
            }
            if domain.is_unsteady() {
                p.push(times[i]);
            }
            b.points.extend_from_slice(&p);
            b.normals.extend_from_slice(&normal);
            b.faces.push(face);
            b.velocity.push(rule.velocity);
            b.magnetic.push(rule.magnetic);
            b.noisy.push(rule.noisy && (rule.segment.is_none() || in_segment));
        }
    }
    b.fill_targets(exact);
    Ok(b)
}

/// Stratified points in `Omega x {0}`.
pub fn sample_initial(domain: &Domain, n: usize, exact: Option<&TargetFn>, seed: u64) -> Result<SampleBatch, GeometryError> {
    domain.validate()?;
    if !domain.is_unsteady() {
        return Err(GeometryError::SteadyDomain);
    }
    if n == 0 {
        return Err(GeometryError::EmptySample("initial"));
    }
    let d = domain.dim();
    let space = stratified(&mut stream_rng(seed, Stream::Initial), n, &domain.lo, &domain.hi);
    let mut b = SampleBatch::empty(Role::Initial, domain);
    for p in space.chunks_exact(d) {
        b.points.extend_from_slice(p);
        b.points.push(0.0);
    }
    b.velocity = vec![true; n];
    b.magnetic = vec![true; n];
    b.noisy = vec![false; n];
    b.fill_targets(exact);
    Ok(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise standard deviation as a fraction of the data's.
    pub amplitude_ratio: f64,
    pub seed: u64,
}

/// Adds zero-mean Gaussian noise to the rows flagged in `batch.noisy`; the
/// standard deviation per column is `amplitude_ratio` times the sample
/// standard deviation of that column over the same rows.
pub fn apply_noise(batch: &mut SampleBatch, spec: &NoiseSpec) {
    let k = batch.target_names.len();
    let rows: Vec<usize> = (0..batch.len()).filter(|&i| batch.noisy[i]).collect();
    if spec.amplitude_ratio <= 0.0 || k == 0 || rows.len() < 2 {
        return;
    }
    let mut rng = stream_rng(spec.seed, Stream::Noise);
    let std: Vec<f64> = (0..k)
        .map(|c| {
            let n = rows.len() as f64;
            let mean = rows.iter().map(|&i| batch.targets[i * k + c]).sum::<f64>() / n;
            let var = rows
                .iter()
                .map(|&i| (batch.targets[i * k + c] - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            var.sqrt()
        })
        .collect();
    for &i in &rows {
        for c in 0..k {
            let s = spec.amplitude_ratio * std[c];
            if s > 0.0 {
                let noise = Normal::new(0.0, s).expect("positive std");
                batch.targets[i * k + c] += noise.sample(&mut rng);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit2() -> Domain {
        Domain::new(vec![0.0, 0.0], vec![1.0, 1.0], None).unwrap()
    }

    #[test]
    fn lhs_quartiles() {
        let b = latin_hypercube(4, &unit2(), 1).unwrap();
        for a in 0..2 {
            let mut v: Vec<f64> = (0..4).map(|i| b.point(i)[a]).collect();
            v.sort_by(f64::total_cmp);
            for (k, x) in v.iter().enumerate() {
                assert!(*x > k as f64 / 4.0 && *x < (k + 1) as f64 / 4.0);
            }
        }
    }

    #[test]
    fn lhs_rejects_zero_and_is_seeded() {
        assert_eq!(latin_hypercube(0, &unit2(), 1), Err(GeometryError::EmptySample("interior")));
        let a = latin_hypercube(50, &unit2(), 3).unwrap();
        assert_eq!(a, latin_hypercube(50, &unit2(), 3).unwrap());
        assert_ne!(a, latin_hypercube(50, &unit2(), 4).unwrap());
    }

    #[test]
    fn boundary_counts_and_normals() {
        let d = unit2();
        let b = sample_boundary(&d, 100, &BoundaryMask::standard(4), None, 1).unwrap();
        assert_eq!(b.len(), 400);
        let right = sample_boundary(&d, 100, &BoundaryMask::preset(MaskPreset::Right, 4), None, 1).unwrap();
        assert_eq!(right.len(), 300);
        for i in 0..b.len() {
            if b.faces[i] == 1 {
                assert_eq!(b.normal(i), &[1.0, 0.0]);
                assert_eq!(b.point(i)[0], 1.0);
            }
        }
    }

    #[test]
    fn masking_does_not_move_other_faces() {
        let d = unit2();
        let a = sample_boundary(&d, 10, &BoundaryMask::standard(4), None, 5).unwrap();
        let b = sample_boundary(&d, 10, &BoundaryMask::preset(MaskPreset::UpperRight, 4), None, 5).unwrap();
        let left = |s: &SampleBatch| (0..s.len()).filter(|&i| s.faces[i] == 2).map(|i| s.point(i).to_vec()).collect::<Vec<_>>();
        assert_eq!(left(&a), left(&b));
    }

    #[test]
    fn everything_masked_is_rejected() {
        let mask = BoundaryMask {
            rules: (0..4).map(FaceRule::off).collect(),
        };
        assert_eq!(
            sample_boundary(&unit2(), 3, &mask, None, 0),
            Err(GeometryError::EverythingMasked)
        );
    }

    #[test]
    fn stagger_drops_fields_per_face() {
        let b = sample_boundary(&unit2(), 5, &BoundaryMask::preset(MaskPreset::Stagger, 4), None, 0).unwrap();
        for i in 0..b.len() {
            assert_eq!(b.magnetic[i], b.faces[i] != TOP);
            assert_eq!(b.velocity[i], b.faces[i] != BOTTOM);
        }
    }

    #[test]
    fn initial_targets_and_time() {
        let d = Domain::new(vec![0.0, 0.0], vec![1.0, 1.0], Some(1.0)).unwrap();
        let f = |p: &[f64]| vec![p[0] + 2.0 * p[1], p[2]];
        let t = TargetFn {
            names: vec!["a".into(), "b".into()],
            f: &f,
        };
        let b = sample_initial(&d, 100, Some(&t), 2).unwrap();
        assert_eq!(b.len(), 100);
        for i in 0..100 {
            assert_eq!(b.point(i)[2], 0.0);
            assert_eq!(b.target(i), f(b.point(i)).as_slice());
        }
        assert_eq!(sample_initial(&unit2(), 3, None, 0), Err(GeometryError::SteadyDomain));
    }

    #[test]
    fn noise_statistics() {
        let d = Domain::new(vec![0.0, 0.0], vec![1.0, 1.0], None).unwrap();
        let f = |p: &[f64]| vec![3.0 * p[0], 7.0];
        let t = TargetFn {
            names: vec!["a".into(), "c".into()],
            f: &f,
        };
        let mut mask = BoundaryMask::standard(4);
        mask.rules.iter_mut().for_each(|r| r.noisy = true);
        let mut b = sample_boundary(&d, 2500, &mask, Some(&t), 1).unwrap();
        let clean = b.clone();
        apply_noise(&mut b, &NoiseSpec { amplitude_ratio: 0.0, seed: 1 });
        assert_eq!(b, clean);
        apply_noise(&mut b, &NoiseSpec { amplitude_ratio: 0.1, seed: 1 });
        let n = b.len() as f64;
        let col = |s: &SampleBatch, c: usize| (0..s.len()).map(|i| s.target(i)[c]).collect::<Vec<_>>();
        let (x, y) = (col(&clean, 0), col(&b, 0));
        let mean = x.iter().sum::<f64>() / n;
        let data_std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let diffs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - a).collect();
        let dm = diffs.iter().sum::<f64>() / n;
        let noise_std = (diffs.iter().map(|v| (v - dm).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((noise_std / (0.1 * data_std) - 1.0).abs() < 0.05);
        assert_eq!(col(&b, 1), col(&clean, 1));
    }

    #[test]
    fn csv_header() {
        let d = Domain::new(vec![0.0, 0.0], vec![1.0, 1.0], Some(1.0)).unwrap();
        let b = latin_hypercube(2, &d, 0).unwrap();
        let mut out = Vec::new();
        b.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().next(), Some("x,y,t"));
        assert_eq!(s.lines().count(), 3);
    }
}
