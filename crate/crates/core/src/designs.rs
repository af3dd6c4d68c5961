//! The five sampling designs: SRSWOR, two-stage, two-stage double sampling,
//! adaptive two-stage sequential sampling (ATS) and its double-sampling variant
//! (ATSD). Every design is a pure function of the population, its parameters
//! and the random stream handed in.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::population::{Condition, Population, Unit};

/// Simple random sample without replacement of `n` positions out of
/// `frame_size`, returned in increasing order.
pub fn srswor<R: Rng + ?Sized>(frame_size: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n > frame_size {
        return Err(Error::InvalidDesign(format!("cannot draw {n} of {frame_size} without replacement")));
    }
    let mut picked = rand::seq::index::sample(rng, frame_size, n).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Units of one PSU that a within-PSU design samples from, tagged with their
/// position `j` inside the PSU.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub psu: usize,
    pub psu_size: usize,
    pub units: Vec<(usize, Unit)>,
}

impl Frame {
    pub fn whole_psu(pop: &Population, h: usize) -> Self {
        Self { psu: h, psu_size: pop.psu_size(h), units: pop.psu(h).iter().copied().enumerate().collect() }
    }

    pub fn subset(pop: &Population, h: usize, positions: &[usize]) -> Self {
        Self { psu: h, psu_size: pop.psu_size(h), units: positions.iter().map(|&j| (j, *pop.unit(h, j))).collect() }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn total(&self, f: impl Fn(&Unit) -> f64) -> f64 {
        crate::numeric::compensated_sum(self.units.iter().map(|(_, u)| f(u)))
    }
}

/// Record of one sequential (adaptive) draw inside a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PsuAdaptiveSample {
    pub frame: Frame,
    /// Frame positions of the initial SRSWOR draw.
    pub initial: Vec<usize>,
    /// Frame positions added because of condition-satisfying initial units.
    pub adaptive: Vec<usize>,
    pub l_initial: usize,
    pub l_total: usize,
    pub d: usize,
    pub condition: Condition,
    /// The requested expansion `d * l_initial` exceeded what was left of the frame.
    pub capped: bool,
}

impl PsuAdaptiveSample {
    /// Builds the record from explicit selections; counts are derived.
    pub fn from_selection(
        frame: Frame,
        initial: Vec<usize>,
        adaptive: Vec<usize>,
        d: usize,
        condition: Condition,
    ) -> Self {
        let met = |&i: &usize| condition.is_met(&frame.units[i].1);
        let l_initial = initial.iter().filter(|i| met(i)).count();
        let l_total = l_initial + adaptive.iter().filter(|i| met(i)).count();
        let capped = d * l_initial > frame.len() - initial.len();
        Self { frame, initial, adaptive, l_initial, l_total, d, condition, capped }
    }

    pub fn frame_size(&self) -> usize {
        self.frame.len()
    }

    pub fn n_initial(&self) -> usize {
        self.initial.len()
    }

    pub fn n_final(&self) -> usize {
        self.initial.len() + self.adaptive.len()
    }

    /// Units of the final sample.
    pub fn final_units(&self) -> impl Iterator<Item = &Unit> + Clone {
        self.initial.iter().chain(&self.adaptive).map(|&i| &self.frame.units[i].1)
    }
}

/// Initial SRSWOR of `n_init` frame units followed by one SRSWOR batch of
/// `min(d * l_initial, frame_size - n_init)` units from the rest of the frame.
pub fn sequential_expand<R: Rng + ?Sized>(
    frame: Frame,
    n_init: usize,
    d: usize,
    condition: Condition,
    rng: &mut R,
) -> Result<PsuAdaptiveSample> {
    if frame.is_empty() {
        return Err(Error::InvalidDesign("empty frame".into()));
    }
    if n_init == 0 || n_init > frame.len() {
        return Err(Error::InvalidDesign(format!("initial size {n_init} outside 1..={}", frame.len())));
    }
    let initial = srswor(frame.len(), n_init, rng)?;
    let l_initial = initial.iter().filter(|&&i| condition.is_met(&frame.units[i].1)).count();
    let rest: Vec<usize> = {
        let mut taken = vec![false; frame.len()];
        initial.iter().for_each(|&i| taken[i] = true);
        (0..frame.len()).filter(|&i| !taken[i]).collect()
    };
    let extra = (d * l_initial).min(rest.len());
    let adaptive = srswor(rest.len(), extra, rng)?.into_iter().map(|k| rest[k]).collect();
    Ok(PsuAdaptiveSample::from_selection(frame, initial, adaptive, d, condition))
}

/// Draw record of the adaptive designs. ATS is stored the same way with every
/// frame equal to its whole PSU.
#[derive(Debug, Clone, PartialEq)]
pub struct AtsdSample {
    pub total_psus: usize,
    pub population_size: usize,
    /// `true` for ATSD (frames are phase-one samples with the auxiliary
    /// measured), `false` for ATS.
    pub phase_one: bool,
    pub psus: Vec<PsuAdaptiveSample>,
}

impl AtsdSample {
    pub fn m(&self) -> usize {
        self.psus.len()
    }

    /// First-stage inclusion probability m / M.
    pub fn pi(&self) -> f64 {
        self.m() as f64 / self.total_psus as f64
    }

    /// Auxiliary measurements: the phase-one frames (none for ATS).
    pub fn n_aux(&self) -> usize {
        if !self.phase_one {
            return 0;
        }
        self.psus.iter().map(PsuAdaptiveSample::frame_size).sum()
    }

    /// Target measurements: the final phase-two samples.
    pub fn n_target(&self) -> usize {
        self.psus.iter().map(PsuAdaptiveSample::n_final).sum()
    }

    pub fn any_capped(&self) -> bool {
        self.psus.iter().any(|p| p.capped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AtsdParams {
    pub m: usize,
    pub n1h: usize,
    pub n2h1: usize,
    pub d: usize,
    pub condition: Condition,
}

/// ATS plan. `n1` lists the initial size for each first-stage slot (selected
/// PSUs are taken in increasing label order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AtsParams {
    pub m: usize,
    pub n1: Vec<usize>,
    pub d1: usize,
    pub condition: Condition,
}

fn check_m(pop: &Population, m: usize) -> Result<()> {
    if m == 0 || m > pop.psu_count() {
        return Err(Error::InvalidDesign(format!("m = {m} must lie in 1..={}", pop.psu_count())));
    }
    Ok(())
}

fn min_psu(pop: &Population) -> usize {
    pop.psu_sizes().into_iter().min().unwrap_or(0)
}

fn check_slots(pop: &Population, m: usize, sizes: &[usize], what: &str) -> Result<()> {
    if sizes.len() != m {
        return Err(Error::InvalidDesign(format!("{what}: {} slot sizes for m = {m}", sizes.len())));
    }
    let cap = min_psu(pop);
    if let Some(&bad) = sizes.iter().find(|&&n| n == 0 || n > cap) {
        return Err(Error::InvalidDesign(format!("{what}: slot size {bad} outside 1..={cap}")));
    }
    Ok(())
}

impl AtsdParams {
    pub fn validate(&self, pop: &Population) -> Result<()> {
        check_m(pop, self.m)?;
        let cap = min_psu(pop);
        if self.n1h == 0 || self.n1h > cap {
            return Err(Error::InvalidDesign(format!("n1h = {} must lie in 1..={cap}", self.n1h)));
        }
        if self.n2h1 == 0 || self.n2h1 > self.n1h {
            return Err(Error::InvalidDesign(format!("n2h1 = {} must lie in 1..={}", self.n2h1, self.n1h)));
        }
        Ok(())
    }
}

impl AtsParams {
    pub fn uniform(m: usize, n1: usize, d1: usize, condition: Condition) -> Self {
        Self { m, n1: vec![n1; m], d1, condition }
    }

    pub fn validate(&self, pop: &Population) -> Result<()> {
        check_m(pop, self.m)?;
        check_slots(pop, self.m, &self.n1, "ATS initial sizes")
    }
}

/// Splits `total` over `slots` as evenly as possible, larger shares first.
pub fn spread(total: usize, slots: usize) -> Vec<usize> {
    if slots == 0 {
        return Vec::new();
    }
    let (base, extra) = (total / slots, total % slots);
    (0..slots).map(|i| base + usize::from(i < extra)).collect()
}

fn select_psus<R: Rng + ?Sized>(pop: &Population, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_m(pop, m)?;
    srswor(pop.psu_count(), m, rng)
}

/// Adaptive two-stage sequential double sampling.
pub fn run_atsd<R: Rng + ?Sized>(pop: &Population, params: &AtsdParams, rng: &mut R) -> Result<AtsdSample> {
    params.validate(pop)?;
    let selected = select_psus(pop, params.m, rng)?;
    let mut psus = Vec::with_capacity(selected.len());
    for h in selected {
        let phase1 = srswor(pop.psu_size(h), params.n1h, rng)?;
        let frame = Frame::subset(pop, h, &phase1);
        psus.push(sequential_expand(frame, params.n2h1, params.d, params.condition, rng)?);
    }
    Ok(AtsdSample { total_psus: pop.psu_count(), population_size: pop.size(), phase_one: true, psus })
}

/// Adaptive two-stage sequential sampling over whole PSUs.
pub fn run_ats<R: Rng + ?Sized>(pop: &Population, params: &AtsParams, rng: &mut R) -> Result<AtsdSample> {
    params.validate(pop)?;
    let selected = select_psus(pop, params.m, rng)?;
    let mut psus = Vec::with_capacity(selected.len());
    for (slot, h) in selected.into_iter().enumerate() {
        let frame = Frame::whole_psu(pop, h);
        psus.push(sequential_expand(frame, params.n1[slot], params.d1, params.condition, rng)?);
    }
    Ok(AtsdSample { total_psus: pop.psu_count(), population_size: pop.size(), phase_one: false, psus })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrsPsuSample {
    pub psu: usize,
    pub psu_size: usize,
    pub units: Vec<(usize, Unit)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageSample {
    pub total_psus: usize,
    pub population_size: usize,
    pub psus: Vec<SrsPsuSample>,
}

/// Two-stage SRSWOR; `sizes[slot]` units are taken in the PSU filling that slot.
pub fn run_two_stage<R: Rng + ?Sized>(
    pop: &Population,
    m: usize,
    sizes: &[usize],
    rng: &mut R,
) -> Result<TwoStageSample> {
    check_m(pop, m)?;
    check_slots(pop, m, sizes, "two-stage sizes")?;
    let selected = select_psus(pop, m, rng)?;
    let mut psus = Vec::with_capacity(m);
    for (slot, h) in selected.into_iter().enumerate() {
        let picked = srswor(pop.psu_size(h), sizes[slot], rng)?;
        psus.push(SrsPsuSample {
            psu: h,
            psu_size: pop.psu_size(h),
            units: picked.into_iter().map(|j| (j, *pop.unit(h, j))).collect(),
        });
    }
    Ok(TwoStageSample { total_psus: pop.psu_count(), population_size: pop.size(), psus })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoublePsuSample {
    pub psu: usize,
    pub psu_size: usize,
    /// Phase-one units (auxiliary measured).
    pub phase1: Vec<(usize, Unit)>,
    /// Positions within `phase1` of the phase-two subsample (target measured).
    pub phase2: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageDoubleSample {
    pub total_psus: usize,
    pub population_size: usize,
    pub psus: Vec<DoublePsuSample>,
}

/// Two-stage double sampling: SRSWOR of PSUs, a phase-one SRSWOR of `n1h` units
/// per PSU and a phase-two SRSWOR of `phase2[slot]` of those.
pub fn run_two_stage_double<R: Rng + ?Sized>(
    pop: &Population,
    m: usize,
    n1h: usize,
    phase2: &[usize],
    rng: &mut R,
) -> Result<TwoStageDoubleSample> {
    check_m(pop, m)?;
    check_slots(pop, m, &[n1h].repeat(m), "phase-one size")?;
    if phase2.len() != m || phase2.iter().any(|&k| k == 0 || k > n1h) {
        return Err(Error::InvalidDesign(format!("phase-two sizes {phase2:?} must lie in 1..={n1h}")));
    }
    let selected = select_psus(pop, m, rng)?;
    let mut psus = Vec::with_capacity(m);
    for (slot, h) in selected.into_iter().enumerate() {
        let phase1 = srswor(pop.psu_size(h), n1h, rng)?;
        let sub = srswor(n1h, phase2[slot], rng)?;
        psus.push(DoublePsuSample {
            psu: h,
            psu_size: pop.psu_size(h),
            phase1: phase1.into_iter().map(|j| (j, *pop.unit(h, j))).collect(),
            phase2: sub,
        });
    }
    Ok(TwoStageDoubleSample { total_psus: pop.psu_count(), population_size: pop.size(), psus })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrsSample {
    pub population_size: usize,
    /// `(flat index, unit)` pairs.
    pub units: Vec<(usize, Unit)>,
}

/// SRSWOR of `n` units from the whole population (PSU structure ignored).
pub fn run_srswor_design<R: Rng + ?Sized>(pop: &Population, n: usize, rng: &mut R) -> Result<SrsSample> {
    if n == 0 {
        return Err(Error::InvalidDesign("SRSWOR size must be at least 1".into()));
    }
    let flat: Vec<&Unit> = pop.units().collect();
    let picked = srswor(flat.len(), n, rng)?;
    Ok(SrsSample { population_size: flat.len(), units: picked.into_iter().map(|i| (i, *flat[i])).collect() })
}

/// Parameters of any of the five designs.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignParams {
    Srs { n: usize },
    TwoStage { m: usize, sizes: Vec<usize> },
    TwoStageDouble { m: usize, n1h: usize, phase2: Vec<usize> },
    Ats(AtsParams),
    Atsd(AtsdParams),
}

/// A draw from any design.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Srs(SrsSample),
    TwoStage(TwoStageSample),
    TwoStageDouble(TwoStageDoubleSample),
    Adaptive(AtsdSample),
}

impl Draw {
    /// `(auxiliary measurements, target measurements)` actually taken.
    pub fn measurements(&self) -> (usize, usize) {
        match self {
            Draw::Srs(s) => (0, s.units.len()),
            Draw::TwoStage(s) => (0, s.psus.iter().map(|p| p.units.len()).sum()),
            Draw::TwoStageDouble(s) => {
                (s.psus.iter().map(|p| p.phase1.len()).sum(), s.psus.iter().map(|p| p.phase2.len()).sum())
            }
            Draw::Adaptive(s) => (s.n_aux(), s.n_target()),
        }
    }
}

pub fn draw<R: Rng + ?Sized>(pop: &Population, params: &DesignParams, rng: &mut R) -> Result<Draw> {
    Ok(match params {
        DesignParams::Srs { n } => Draw::Srs(run_srswor_design(pop, *n, rng)?),
        DesignParams::TwoStage { m, sizes } => Draw::TwoStage(run_two_stage(pop, *m, sizes, rng)?),
        DesignParams::TwoStageDouble { m, n1h, phase2 } => {
            Draw::TwoStageDouble(run_two_stage_double(pop, *m, *n1h, phase2, rng)?)
        }
        DesignParams::Ats(p) => Draw::Adaptive(run_ats(pop, p, rng)?),
        DesignParams::Atsd(p) => Draw::Adaptive(run_atsd(pop, p, rng)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Variable;
    use crate::rng::DrawRng;

    fn frame_of(ys: &[f64]) -> Frame {
        Frame { psu: 0, psu_size: ys.len(), units: ys.iter().map(|&y| Unit::new(y, y, 0.0)).enumerate().collect() }
    }

    #[test]
    fn srswor_edges() {
        let mut rng = DrawRng::new(1, 0).rng();
        assert_eq!(srswor(5, 5, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(srswor(5, 0, &mut rng).unwrap().is_empty());
        assert!(srswor(5, 6, &mut rng).is_err());
    }

    #[test]
    fn no_expansion_without_satisfiers() {
        let mut rng = DrawRng::new(2, 0).rng();
        let s = sequential_expand(frame_of(&[0.0; 8]), 3, 5, Condition::on(Variable::Y), &mut rng).unwrap();
        assert_eq!((s.l_initial, s.n_final(), s.adaptive.len()), (0, 3, 0));
    }

    #[test]
    fn zero_multiplier_is_plain_srswor() {
        let mut rng = DrawRng::new(3, 0).rng();
        let s = sequential_expand(frame_of(&[1.0; 8]), 3, 0, Condition::on(Variable::Y), &mut rng).unwrap();
        assert_eq!((s.l_initial, s.n_final()), (3, 3));
    }

    #[test]
    fn expansion_caps_at_frame_exhaustion() {
        let mut rng = DrawRng::new(4, 0).rng();
        let s = sequential_expand(frame_of(&[1.0; 6]), 2, 5, Condition::on(Variable::Y), &mut rng).unwrap();
        assert_eq!(s.n_final(), 6);
        assert!(s.capped);
    }

    #[test]
    fn expansion_input_errors() {
        let mut rng = DrawRng::new(4, 0).rng();
        let c = Condition::on(Variable::Y);
        assert!(sequential_expand(frame_of(&[]), 1, 1, c, &mut rng).is_err());
        assert!(sequential_expand(frame_of(&[1.0]), 0, 1, c, &mut rng).is_err());
        assert!(sequential_expand(frame_of(&[1.0]), 2, 1, c, &mut rng).is_err());
    }

    #[test]
    fn spread_is_even() {
        assert_eq!(spread(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(spread(8, 4), vec![2; 4]);
        assert_eq!(spread(3, 0), Vec::<usize>::new());
    }

    #[test]
    fn atsd_parameter_bounds() {
        let pop = Population::from_psus(vec![vec![Unit::new(1.0, 1.0, 0.0); 4]; 2]).unwrap();
        let mut rng = DrawRng::new(5, 0).rng();
        let c = Condition::on(Variable::X);
        let bad = [
            AtsdParams { m: 3, n1h: 2, n2h1: 1, d: 1, condition: c },
            AtsdParams { m: 1, n1h: 5, n2h1: 1, d: 1, condition: c },
            AtsdParams { m: 1, n1h: 2, n2h1: 3, d: 1, condition: c },
            AtsdParams { m: 1, n1h: 2, n2h1: 0, d: 1, condition: c },
        ];
        for p in bad {
            assert!(run_atsd(&pop, &p, &mut rng).is_err(), "{p:?}");
        }
        let ok = run_atsd(&pop, &AtsdParams { m: 2, n1h: 3, n2h1: 2, d: 1, condition: c }, &mut rng).unwrap();
        assert_eq!(ok.n_aux(), 6);
    }

    #[test]
    fn ats_measures_no_auxiliary() {
        let pop = Population::from_psus(vec![vec![Unit::new(1.0, 1.0, 0.0); 4]; 2]).unwrap();
        let mut rng = DrawRng::new(6, 0).rng();
        let p = DesignParams::Ats(AtsParams::uniform(2, 2, 1, Condition::on(Variable::Y)));
        let d = draw(&pop, &p, &mut rng).unwrap();
        assert_eq!(d.measurements(), (0, 8));
    }
}
