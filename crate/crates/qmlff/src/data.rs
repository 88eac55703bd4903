//! Dataset format, per-system centering, synthetic surface generators, and
//! splits.
//!
//! Datasets are JSON-lines files: a header record carrying the unit tags and
//! system kind, then one record per sample. Floating-point values are written
//! with shortest-round-trip decimals, so save → load reproduces every value
//! bit for bit. Lengths are angstrom, energies eV, forces eV/angstrom
//! throughout.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelInput, System};

/// One configuration: species, raw positions, energy, optional forces.
///
/// `force_mask`, when present, marks which force components carry meaningful
/// labels (used by one-dimensional surface cuts where only a single component
/// is labeled).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub species: Vec<String>,
    pub positions: Vec<[f64; 3]>,
    pub energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forces: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_mask: Option<Vec<[bool; 3]>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub system: System,
    pub source: String,
    pub samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    system: System,
    units: Units,
    #[serde(default)]
    source: String,
}

#[derive(Serialize, Deserialize)]
struct Units {
    length: String,
    energy: String,
}

const FORMAT_NAME: &str = "qmlff-dataset";
const FORMAT_VERSION: u32 = 1;

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy).collect()
    }

    pub fn has_forces(&self) -> bool {
        self.samples.iter().any(|s| s.forces.is_some())
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        system: dataset.system,
        units: Units {
            length: "angstrom".into(),
            energy: "eV".into(),
        },
        source: dataset.source.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for sample in &dataset.samples {
        writeln!(out, "{}", serde_json::to_string(sample)?)?;
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines.next().ok_or(Error::Dataset {
        line: 1,
        message: "empty file, header record missing".into(),
    })?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| Error::Dataset {
        line: 1,
        message: format!("invalid header: {e}"),
    })?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Dataset {
            line: 1,
            message: format!(
                "unsupported format '{}' version {}",
                header.format, header.version
            ),
        });
    }
    if header.units.length != "angstrom" || header.units.energy != "eV" {
        return Err(Error::Dataset {
            line: 1,
            message: format!(
                "unsupported units ({}, {}); expected (angstrom, eV)",
                header.units.length, header.units.energy
            ),
        });
    }

    let mut samples = Vec::new();
    let mut reference_species: Option<Vec<String>> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&text).map_err(|e| Error::Dataset {
            line: line_no,
            message: e.to_string(),
        })?;
        let sample = validate_and_canonicalize(header.system, sample, line_no)?;
        match &reference_species {
            None => reference_species = Some(sample.species.clone()),
            Some(reference) => {
                if *reference != sample.species {
                    return Err(Error::Dataset {
                        line: line_no,
                        message: format!(
                            "species {:?} differ from earlier samples {:?}",
                            sample.species, reference
                        ),
                    });
                }
            }
        }
        samples.push(sample);
    }

    Ok(Dataset {
        system: header.system,
        source: header.source,
        samples,
    })
}

/// Check shapes and reorder atoms into the canonical per-system order:
/// diatomic as given (two distinct species), triatomic with the unique atom
/// first, dimer as (unique, common, common) twice.
fn validate_and_canonicalize(system: System, sample: Sample, line: usize) -> Result<Sample> {
    let n = system.num_atoms();
    if sample.species.len() != n || sample.positions.len() != n {
        return Err(Error::Dataset {
            line,
            message: format!(
                "expected {n} atoms, got {} species and {} positions",
                sample.species.len(),
                sample.positions.len()
            ),
        });
    }
    if let Some(f) = &sample.forces {
        if f.len() != n {
            return Err(Error::Dataset {
                line,
                message: format!("expected {n} force vectors, got {}", f.len()),
            });
        }
    }
    if let Some(m) = &sample.force_mask {
        if sample.forces.is_none() || m.len() != n {
            return Err(Error::Dataset {
                line,
                message: "force_mask requires matching forces".into(),
            });
        }
    }

    let perm: Vec<usize> = match system {
        System::Diatomic => {
            if sample.species[0] == sample.species[1] {
                return Err(Error::Dataset {
                    line,
                    message: "diatomic samples need two distinct species".into(),
                });
            }
            vec![0, 1]
        }
        System::Triatomic => {
            let unique = unique_species_index(&sample.species).ok_or(Error::Dataset {
                line,
                message: format!(
                    "triatomic samples need one unique and two identical atoms, got {:?}",
                    sample.species
                ),
            })?;
            let mut order = vec![unique];
            order.extend((0..3).filter(|&i| i != unique));
            order
        }
        System::Dimer => {
            // The molecule grouping cannot be inferred from species alone, so
            // the layout must already be (unique, common, common) twice.
            let s = &sample.species;
            let pattern_ok = s[0] == s[3]
                && s[1] == s[2]
                && s[1] == s[4]
                && s[4] == s[5]
                && s[0] != s[1];
            if !pattern_ok {
                return Err(Error::Dataset {
                    line,
                    message: format!(
                        "dimer samples must be ordered (unique, common, common) per molecule, \
                         got {:?}",
                        s
                    ),
                });
            }
            (0..6).collect()
        }
    };

    Ok(apply_permutation(sample, &perm))
}

fn unique_species_index(species: &[String]) -> Option<usize> {
    for i in 0..species.len() {
        if species.iter().filter(|s| **s == species[i]).count() == 1 {
            let rest: Vec<&String> = species.iter().filter(|s| **s != species[i]).collect();
            if rest.windows(2).all(|w| w[0] == w[1]) {
                return Some(i);
            }
        }
    }
    None
}

fn apply_permutation(sample: Sample, perm: &[usize]) -> Sample {
    Sample {
        species: perm.iter().map(|&i| sample.species[i].clone()).collect(),
        positions: perm.iter().map(|&i| sample.positions[i]).collect(),
        forces: sample
            .forces
            .as_ref()
            .map(|f| perm.iter().map(|&i| f[i]).collect()),
        force_mask: sample
            .force_mask
            .as_ref()
            .map(|m| perm.iter().map(|&i| m[i]).collect()),
        energy: sample.energy,
    }
}

// ----- centering -------------------------------------------------------

/// Subtract the midpoint of the two atoms; the output satisfies x1 = −x2
/// exactly.
pub fn center_diatomic(positions: &[[f64; 3]]) -> Result<ModelInput> {
    expect_atoms(positions, 2)?;
    let x1 = [
        (positions[0][0] - positions[1][0]) / 2.0,
        (positions[0][1] - positions[1][1]) / 2.0,
        (positions[0][2] - positions[1][2]) / 2.0,
    ];
    ModelInput::new(
        System::Diatomic,
        vec![x1, [-x1[0], -x1[1], -x1[2]]],
    )
}

/// Subtract the unique-atom position (given first); the output is the two
/// common-atom vectors.
pub fn center_triatomic(positions: &[[f64; 3]]) -> Result<ModelInput> {
    expect_atoms(positions, 3)?;
    let o = positions[0];
    ModelInput::new(
        System::Triatomic,
        vec![sub(positions[1], o), sub(positions[2], o)],
    )
}

/// Subtract the midpoint of the two unique atoms (indices 0 and 3); ordering
/// is preserved and the unique atoms end up opposite each other.
pub fn center_dimer(positions: &[[f64; 3]]) -> Result<ModelInput> {
    expect_atoms(positions, 6)?;
    let m = [
        (positions[0][0] + positions[3][0]) / 2.0,
        (positions[0][1] + positions[3][1]) / 2.0,
        (positions[0][2] + positions[3][2]) / 2.0,
    ];
    ModelInput::new(
        System::Dimer,
        positions.iter().map(|&p| sub(p, m)).collect(),
    )
}

fn expect_atoms(positions: &[[f64; 3]], n: usize) -> Result<()> {
    if positions.len() != n {
        return Err(Error::AtomCount {
            expected: n,
            got: positions.len(),
        });
    }
    Ok(())
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

// ----- synthetic generators --------------------------------------------

/// Morse curve parameters: E(r) = well_depth·(1 − e^{−width·(r − r_eq)})².
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MorseParams {
    /// D_e (eV).
    pub well_depth: f64,
    /// a (1/angstrom).
    pub width: f64,
    /// r_e (angstrom).
    pub r_eq: f64,
}

impl Default for MorseParams {
    fn default() -> Self {
        MorseParams {
            well_depth: 2.5,
            width: 1.1,
            r_eq: 1.6,
        }
    }
}

impl MorseParams {
    pub fn energy(&self, r: f64) -> f64 {
        let u = (-self.width * (r - self.r_eq)).exp();
        self.well_depth * (1.0 - u) * (1.0 - u)
    }

    /// dE/dr.
    pub fn energy_derivative(&self, r: f64) -> f64 {
        let u = (-self.width * (r - self.r_eq)).exp();
        2.0 * self.well_depth * (1.0 - u) * self.width * u
    }
}

/// Randomly oriented and translated two-atom configurations on a Morse
/// curve, with analytic forces.
pub fn synth_diatomic(
    n: usize,
    params: MorseParams,
    r_range: (f64, f64),
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.gen_range(r_range.0..=r_range.1);
        let dir: [f64; 3] = UnitSphere.sample(&mut rng);
        let t = random_translation(&mut rng, 2.0);
        let half = [r / 2.0 * dir[0], r / 2.0 * dir[1], r / 2.0 * dir[2]];
        let p1 = [t[0] + half[0], t[1] + half[1], t[2] + half[2]];
        let p2 = [t[0] - half[0], t[1] - half[1], t[2] - half[2]];

        let de_dr = params.energy_derivative(r);
        // F_1 = −dE/dr · r̂ with r̂ pointing from atom 2 to atom 1.
        let f1 = [-de_dr * dir[0], -de_dr * dir[1], -de_dr * dir[2]];
        samples.push(Sample {
            species: vec!["Li".into(), "H".into()],
            positions: vec![p1, p2],
            energy: params.energy(r),
            forces: Some(vec![f1, [-f1[0], -f1[1], -f1[2]]]),
            force_mask: None,
        });
    }
    Dataset {
        system: System::Diatomic,
        source: format!(
            "synthetic morse well_depth={} width={} r_eq={} r_range=({},{}) seed={seed}",
            params.well_depth, params.width, params.r_eq, r_range.0, r_range.1
        ),
        samples,
    }
}

/// Harmonic bond/angle surface for a (unique, common, common) molecule:
/// E = ½k_b(r1−r0)² + ½k_b(r2−r0)² + ½k_θ(θ−θ0)². Symmetric under swapping
/// the two common atoms by construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TriatomicParams {
    /// Bond spring constant (eV/angstrom²).
    pub bond_k: f64,
    /// Equilibrium bond length (angstrom).
    pub bond_r0: f64,
    /// Angle spring constant (eV/rad²).
    pub angle_k: f64,
    /// Equilibrium angle (rad).
    pub angle_theta0: f64,
    /// Sampled bond-length spread (angstrom).
    pub bond_spread: f64,
    /// Sampled angle spread (rad).
    pub angle_spread: f64,
}

impl Default for TriatomicParams {
    fn default() -> Self {
        TriatomicParams {
            bond_k: 20.0,
            bond_r0: 0.96,
            angle_k: 4.0,
            angle_theta0: 1.8235,
            bond_spread: 0.12,
            angle_spread: 0.3,
        }
    }
}

impl TriatomicParams {
    /// Energy and per-atom forces (unique atom first) of a configuration.
    pub fn energy_forces(&self, positions: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
        let o = positions[0];
        let a = sub(positions[1], o);
        let b = sub(positions[2], o);
        let ra = norm(a);
        let rb = norm(b);
        let cos_t = dot(a, b) / (ra * rb);
        let cos_t = cos_t.clamp(-1.0, 1.0);
        let theta = cos_t.acos();
        let sin_t = theta.sin().max(1e-12);

        let energy = 0.5 * self.bond_k * (ra - self.bond_r0).powi(2)
            + 0.5 * self.bond_k * (rb - self.bond_r0).powi(2)
            + 0.5 * self.angle_k * (theta - self.angle_theta0).powi(2);

        // Gradients with respect to the two bond vectors a and b.
        let mut ga = scale(a, self.bond_k * (ra - self.bond_r0) / ra);
        let mut gb = scale(b, self.bond_k * (rb - self.bond_r0) / rb);

        // ∂cosθ/∂a = b/(ra·rb) − cosθ·a/ra²; dθ = −dcosθ/sinθ.
        let dcos_da = sub(scale(b, 1.0 / (ra * rb)), scale(a, cos_t / (ra * ra)));
        let dcos_db = sub(scale(a, 1.0 / (ra * rb)), scale(b, cos_t / (rb * rb)));
        let pref = -self.angle_k * (theta - self.angle_theta0) / sin_t;
        ga = add(ga, scale(dcos_da, pref));
        gb = add(gb, scale(dcos_db, pref));

        // Forces: the unique atom balances the other two exactly.
        let f1 = scale(ga, -1.0);
        let f2 = scale(gb, -1.0);
        let f0 = [-(f1[0] + f2[0]), -(f1[1] + f2[1]), -(f1[2] + f2[2])];
        (energy, vec![f0, f1, f2])
    }
}

pub fn synth_triatomic(n: usize, params: TriatomicParams, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let r1 = params.bond_r0 + rng.gen_range(-params.bond_spread..=params.bond_spread);
        let r2 = params.bond_r0 + rng.gen_range(-params.bond_spread..=params.bond_spread);
        let theta = params.angle_theta0 + rng.gen_range(-params.angle_spread..=params.angle_spread);

        // Local frame, then a random rotation and translation.
        let h = theta / 2.0;
        let local1 = [h.sin() * r1, 0.0, h.cos() * r1];
        let local2 = [-h.sin() * r2, 0.0, h.cos() * r2];
        let rot = random_rotation(&mut rng);
        let t = random_translation(&mut rng, 2.0);
        let o = t;
        let p1 = add(t, crate::blocks::mat3_apply(&rot, local1));
        let p2 = add(t, crate::blocks::mat3_apply(&rot, local2));

        let positions = vec![o, p1, p2];
        let (energy, forces) = params.energy_forces(&positions);
        samples.push(Sample {
            species: vec!["O".into(), "H".into(), "H".into()],
            positions,
            energy,
            forces: Some(forces),
            force_mask: None,
        });
    }
    Dataset {
        system: System::Triatomic,
        source: format!(
            "synthetic harmonic bond_k={} r0={} angle_k={} theta0={} seed={seed}",
            params.bond_k, params.bond_r0, params.angle_k, params.angle_theta0
        ),
        samples,
    }
}

/// One-dimensional cut through a six-atom dimer surface: a single hydrogen
/// moves along x while every other coordinate stays frozen;
/// E(s) = ½k·s² + q·s⁴ around the cut origin.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DimerCutParams {
    /// Harmonic constant k (eV/angstrom²).
    pub harmonic: f64,
    /// Quartic constant q (eV/angstrom⁴).
    pub quartic: f64,
    /// Half-width of the sampled displacement interval (angstrom).
    pub span: f64,
}

impl Default for DimerCutParams {
    fn default() -> Self {
        DimerCutParams {
            harmonic: 8.0,
            quartic: 3.0,
            span: 0.35,
        }
    }
}

impl DimerCutParams {
    pub fn energy(&self, s: f64) -> f64 {
        0.5 * self.harmonic * s * s + self.quartic * s.powi(4)
    }

    pub fn force(&self, s: f64) -> f64 {
        -(self.harmonic * s + 4.0 * self.quartic * s.powi(3))
    }
}

/// The frozen base geometry of the dimer cut: two water-like molecules with
/// the unique atoms 2.9 angstrom apart.
pub fn dimer_base_geometry() -> Vec<[f64; 3]> {
    vec![
        [0.0, 0.0, -1.45],
        [0.7586, 0.0, -0.8614],
        [-0.7586, 0.0, -0.8614],
        [0.0, 0.0, 1.45],
        [0.7586, 0.0, 0.8614],
        [-0.7586, 0.0, 0.8614],
    ]
}

/// The moving atom and component of the dimer cut: hydrogen 1 of molecule 1
/// along x.
pub const DIMER_CUT_ATOM: usize = 1;
pub const DIMER_CUT_COMPONENT: usize = 0;

pub fn synth_dimer_1dcut(n: usize, params: DimerCutParams, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = dimer_base_geometry();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let s = rng.gen_range(-params.span..=params.span);
        let mut positions = base.clone();
        positions[DIMER_CUT_ATOM][DIMER_CUT_COMPONENT] += s;

        let mut forces = vec![[0.0; 3]; 6];
        forces[DIMER_CUT_ATOM][DIMER_CUT_COMPONENT] = params.force(s);
        let mut mask = vec![[false; 3]; 6];
        mask[DIMER_CUT_ATOM][DIMER_CUT_COMPONENT] = true;

        samples.push(Sample {
            species: vec![
                "O".into(),
                "H".into(),
                "H".into(),
                "O".into(),
                "H".into(),
                "H".into(),
            ],
            positions,
            energy: params.energy(s),
            forces: Some(forces),
            force_mask: Some(mask),
        });
    }
    Dataset {
        system: System::Dimer,
        source: format!(
            "synthetic dimer 1d-cut harmonic={} quartic={} span={} seed={seed}",
            params.harmonic, params.quartic, params.span
        ),
        samples,
    }
}

fn random_translation<R: Rng>(rng: &mut R, extent: f64) -> [f64; 3] {
    [
        rng.gen_range(-extent..extent),
        rng.gen_range(-extent..extent),
        rng.gen_range(-extent..extent),
    ]
}

fn random_rotation<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    crate::blocks::rotation_rep_data(crate::blocks::EulerRotation::new(
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    ))
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Disjoint seeded-shuffle split; the first ⌊n·fraction⌋ shuffled samples
/// form the first part.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates.
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let cut = ((dataset.len() as f64) * fraction).floor() as usize;
    let make = |idx: &[usize]| Dataset {
        system: dataset.system,
        source: dataset.source.clone(),
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
    };
    (make(&indices[..cut]), make(&indices[cut..]))
}
