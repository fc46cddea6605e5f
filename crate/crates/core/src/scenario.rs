//! Geometry, unit conversions, Rayleigh channel generation and the equivalent
//! channel `h̃^H = h^H + θ^H diag(v^H) G`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite_mat, all_finite_vec, CMatrix, CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Full description of one experiment. Powers are in dBm, distances in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_users: usize,
    pub ris_elements: usize,
    pub ap_positions: Vec<Position>,
    pub ris_position: Position,
    pub user_circle_center: Position,
    pub user_circle_radius: f64,
    /// Per-AP transmit power cap.
    pub p_max_dbm: f64,
    /// Noise power shared by every user.
    pub noise_dbm: f64,
    /// Path loss at the reference distance, in dB.
    pub pathloss_ref_db: f64,
    pub ref_distance: f64,
    pub exponent_ap_user: f64,
    pub exponent_ap_ris: f64,
    pub exponent_ris_user: f64,
    pub rate_weights: Vec<f64>,
    pub convergence_eps: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Start the RIS from uniform random phases instead of all-ones.
    pub random_theta_init: bool,
}

/// AP `b` of the default line deployment, 30 m apart at y = -50 m.
fn line_ap_position(b: usize) -> Position {
    Position::new(30.0 * b as f64, -50.0)
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_aps: 5,
            antennas_per_ap: 8,
            num_users: 4,
            ris_elements: 100,
            ap_positions: (0..5).map(line_ap_position).collect(),
            ris_position: Position::new(60.0, 10.0),
            user_circle_center: Position::new(60.0, 0.0),
            user_circle_radius: 5.0,
            p_max_dbm: 20.0,
            noise_dbm: -70.0,
            pathloss_ref_db: -32.0,
            ref_distance: 1.0,
            exponent_ap_user: 3.6,
            exponent_ap_ris: 2.2,
            exponent_ris_user: 2.6,
            rate_weights: vec![1.0; 4],
            convergence_eps: 1e-3,
            max_iterations: 100,
            seed: 0,
            random_theta_init: false,
        }
    }
}

impl ScenarioConfig {
    /// Parses a TOML scenario. Missing keys fall back to the defaults; when
    /// `ap_positions` or `rate_weights` are omitted they are sized to match
    /// `num_aps` / `num_users` (line deployment, unit weights).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Parse(format!("{e}")))?;
        Self::from_toml_table(table)
    }

    pub(crate) fn from_toml_table(table: toml::Table) -> Result<Self> {
        let has_positions = table.contains_key("ap_positions");
        let has_weights = table.contains_key("rate_weights");
        let mut config: ScenarioConfig = table.try_into().map_err(|e: toml::de::Error| Error::Parse(format!("{e}")))?;
        if !has_positions {
            config.ap_positions = (0..config.num_aps).map(line_ap_position).collect();
        }
        if !has_weights {
            config.rate_weights = vec![1.0; config.num_users];
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable in TOML")
    }

    /// Default geometry with the given sizes: APs on the line layout, unit weights.
    pub fn with_dimensions(num_aps: usize, antennas_per_ap: usize, num_users: usize, ris_elements: usize) -> Self {
        Self {
            num_aps,
            antennas_per_ap,
            num_users,
            ris_elements,
            ap_positions: (0..num_aps).map(line_ap_position).collect(),
            rate_weights: vec![1.0; num_users],
            ..Self::default()
        }
    }

    /// Sets the user count and resizes the weight vector with unit weights.
    pub fn set_num_users(&mut self, k: usize) {
        self.num_users = k;
        self.rate_weights.resize(k, 1.0);
    }

    pub fn p_max_mw(&self) -> f64 {
        dbm_to_linear(self.p_max_dbm)
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_linear(self.noise_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_aps == 0 || self.antennas_per_ap == 0 || self.num_users == 0 || self.ris_elements == 0 {
            return bad("num_aps, antennas_per_ap, num_users and ris_elements must be positive".into());
        }
        if self.ap_positions.len() != self.num_aps {
            return bad(format!("{} AP positions given for {} APs", self.ap_positions.len(), self.num_aps));
        }
        if self.rate_weights.len() != self.num_users {
            return bad(format!("{} rate weights given for {} users", self.rate_weights.len(), self.num_users));
        }
        if self.rate_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("rate weights must be positive".into());
        }
        for (name, kappa) in [
            ("exponent_ap_user", self.exponent_ap_user),
            ("exponent_ap_ris", self.exponent_ap_ris),
            ("exponent_ris_user", self.exponent_ris_user),
        ] {
            if !(kappa.is_finite() && kappa > 0.0) {
                return bad(format!("{name} must be > 0"));
            }
        }
        if !(self.user_circle_radius.is_finite() && self.user_circle_radius >= 0.0) {
            return bad("user_circle_radius must be >= 0".into());
        }
        if !(self.ref_distance.is_finite() && self.ref_distance > 0.0) {
            return bad("ref_distance must be > 0".into());
        }
        if !(self.convergence_eps > 0.0) {
            return bad("convergence_eps must be > 0".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        let finite_pos = |p: &Position| p.x.is_finite() && p.y.is_finite();
        if !self.ap_positions.iter().all(finite_pos)
            || !finite_pos(&self.ris_position)
            || !finite_pos(&self.user_circle_center)
        {
            return bad("positions must be finite".into());
        }
        for v in [self.p_max_dbm, self.noise_dbm, self.pathloss_ref_db] {
            if !v.is_finite() {
                return bad("power and path-loss values must be finite".into());
            }
        }
        Ok(())
    }
}

/// dBm → milliwatts.
pub fn dbm_to_linear(value_dbm: f64) -> f64 {
    10f64.powf(value_dbm / 10.0)
}

/// Path loss `C0 - 10 κ log10(d / d0)` in dB.
pub fn pathloss_db(d: f64, kappa: f64, c0_db: f64, d0: f64) -> Result<f64> {
    if !(d > 0.0) || !(d0 > 0.0) {
        return Err(Error::DegenerateGeometry(format!("path loss needs positive distances (d = {d}, d0 = {d0})")));
    }
    Ok(c0_db - 10.0 * kappa * (d / d0).log10())
}

/// One channel realization. `cascade[b][k]` is the `M × N_t` matrix
/// `diag(v_k^H) G_b`, so the RIS contribution to `h̃_{b,k}^H` is `θ^H · cascade[b][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub direct: Vec<Vec<CVector>>,
    pub ap_ris: Vec<CMatrix>,
    pub ris_user: Vec<CVector>,
    pub cascade: Vec<Vec<CMatrix>>,
    pub user_positions: Vec<Position>,
    /// Noise power per user in mW.
    pub noise: Vec<f64>,
    /// Unit-modulus phases drawn once per realization for the random-RIS baseline.
    pub random_phases: CVector,
}

impl ChannelSet {
    /// Builds a channel set from explicit links, computing the cascades.
    pub fn from_parts(
        direct: Vec<Vec<CVector>>,
        ap_ris: Vec<CMatrix>,
        ris_user: Vec<CVector>,
        noise: Vec<f64>,
    ) -> Result<Self> {
        let b_count = direct.len();
        let k_count = ris_user.len();
        if b_count == 0 || k_count == 0 {
            return Err(Error::DimensionMismatch("empty channel set".into()));
        }
        if ap_ris.len() != b_count || noise.len() != k_count {
            return Err(Error::DimensionMismatch(
                "AP-RIS list or noise vector length disagrees with the direct links".into(),
            ));
        }
        let nt = direct[0].first().map(|h| h.len()).unwrap_or(0);
        let m = ris_user[0].len();
        for row in &direct {
            if row.len() != k_count || row.iter().any(|h| h.len() != nt) {
                return Err(Error::DimensionMismatch("direct links must be B × K vectors of length N_t".into()));
            }
        }
        if ap_ris.iter().any(|g| g.nrows() != m || g.ncols() != nt) || ris_user.iter().any(|v| v.len() != m) {
            return Err(Error::DimensionMismatch("RIS links must be M × N_t and length M".into()));
        }
        if noise.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig("noise powers must be positive".into()));
        }
        let cascade = ap_ris.iter().map(|g| ris_user.iter().map(|v| cascade_matrix(g, v)).collect()).collect();
        let set = Self {
            direct,
            ap_ris,
            ris_user,
            cascade,
            user_positions: vec![Position::new(0.0, 0.0); k_count],
            noise,
            random_phases: CVector::from_element(m, C64::new(1.0, 0.0)),
        };
        set.check_finite()?;
        Ok(set)
    }

    pub fn num_aps(&self) -> usize {
        self.direct.len()
    }

    pub fn num_users(&self) -> usize {
        self.ris_user.len()
    }

    pub fn antennas(&self) -> usize {
        self.direct[0][0].len()
    }

    pub fn ris_elements(&self) -> usize {
        self.ris_user[0].len()
    }

    fn check_finite(&self) -> Result<()> {
        let ok = self.direct.iter().flatten().all(all_finite_vec)
            && self.ap_ris.iter().all(all_finite_mat)
            && self.ris_user.iter().all(all_finite_vec)
            && self.cascade.iter().flatten().all(all_finite_mat);
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("channel entries".into()))
        }
    }
}

/// `diag(v^H) G`: row `m` of `G` scaled by `conj(v_m)`.
fn cascade_matrix(g: &CMatrix, v: &CVector) -> CMatrix {
    let mut q = g.clone();
    for (m, mut row) in q.row_iter_mut().enumerate() {
        let s = v[m].conj();
        row.iter_mut().for_each(|z| *z *= s);
    }
    q
}

/// Independent RNG substreams, one per link, so that generation order (or
/// parallelism) never changes a realization.
#[derive(Clone, Copy)]
enum Stream {
    Users,
    Direct(usize, usize),
    ApRis(usize),
    RisUser(usize),
    RandomPhases,
}

impl Stream {
    fn id(self) -> u64 {
        let (tag, a, b) = match self {
            Stream::Users => (1u64, 0, 0),
            Stream::Direct(b, k) => (2, b as u64, k as u64),
            Stream::ApRis(b) => (3, b as u64, 0),
            Stream::RisUser(k) => (4, k as u64, 0),
            Stream::RandomPhases => (5, 0, 0),
        };
        (tag << 56) | ((a & 0x0fff_ffff) << 28) | (b & 0x0fff_ffff)
    }

    fn rng(self, seed: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(self.id());
        rng
    }
}

/// Circularly symmetric complex Gaussian sample with the given variance.
fn cn(rng: &mut ChaCha20Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

fn link_variance(a: &Position, b: &Position, kappa: f64, config: &ScenarioConfig, what: &str) -> Result<f64> {
    let d = a.distance(b);
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry(format!("{what}: coincident nodes at ({}, {})", a.x, a.y)));
    }
    Ok(dbm_to_linear(pathloss_db(d, kappa, config.pathloss_ref_db, config.ref_distance)?))
}

/// Draws user positions (area-uniform in the disk) and all Rayleigh links.
pub fn generate_channels(config: &ScenarioConfig, seed: u64) -> Result<ChannelSet> {
    config.validate()?;
    let (b_count, nt, k_count, m) = (config.num_aps, config.antennas_per_ap, config.num_users, config.ris_elements);

    let mut rng = Stream::Users.rng(seed);
    let user_positions: Vec<Position> = (0..k_count)
        .map(|_| {
            let r = config.user_circle_radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            Position::new(config.user_circle_center.x + r * phi.cos(), config.user_circle_center.y + r * phi.sin())
        })
        .collect();

    let mut direct = Vec::with_capacity(b_count);
    for (b, ap) in config.ap_positions.iter().enumerate() {
        let mut row = Vec::with_capacity(k_count);
        for (k, user) in user_positions.iter().enumerate() {
            let var = link_variance(ap, user, config.exponent_ap_user, config, "AP-user link")?;
            let mut rng = Stream::Direct(b, k).rng(seed);
            row.push(CVector::from_fn(nt, |_, _| cn(&mut rng, var)));
        }
        direct.push(row);
    }

    let mut ap_ris = Vec::with_capacity(b_count);
    for (b, ap) in config.ap_positions.iter().enumerate() {
        let var = link_variance(ap, &config.ris_position, config.exponent_ap_ris, config, "AP-RIS link")?;
        let mut rng = Stream::ApRis(b).rng(seed);
        // row-major draw keeps the leading rows identical when M changes
        let entries: Vec<C64> = (0..m * nt).map(|_| cn(&mut rng, var)).collect();
        ap_ris.push(CMatrix::from_row_slice(m, nt, &entries));
    }

    let mut ris_user = Vec::with_capacity(k_count);
    for (k, user) in user_positions.iter().enumerate() {
        let var = link_variance(&config.ris_position, user, config.exponent_ris_user, config, "RIS-user link")?;
        let mut rng = Stream::RisUser(k).rng(seed);
        ris_user.push(CVector::from_fn(m, |_, _| cn(&mut rng, var)));
    }

    let mut rng = Stream::RandomPhases.rng(seed);
    let random_phases = CVector::from_fn(m, |_, _| C64::from_polar(1.0, 2.0 * PI * rng.random::<f64>()));

    let mut set = ChannelSet::from_parts(direct, ap_ris, ris_user, vec![config.noise_mw(); k_count])?;
    set.user_positions = user_positions;
    set.random_phases = random_phases;
    Ok(set)
}

/// `h̃ = h + q^H θ`, i.e. `h̃^H = h^H + θ^H q` with `q` the `M × N_t` cascade.
pub fn effective_channel(h: &CVector, q: &CMatrix, theta: &CVector) -> Result<CVector> {
    if q.ncols() != h.len() || q.nrows() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "h has {} entries, cascade is {}×{}, θ has {}",
            h.len(),
            q.nrows(),
            q.ncols(),
            theta.len()
        )));
    }
    Ok(h + q.ad_mul(theta))
}

/// All `h̃_{b,k}` for one phase vector, plus the noise powers they are used with.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    pub eff: Vec<Vec<CVector>>,
    pub noise: Vec<f64>,
}

impl EffectiveChannels {
    pub fn new(ch: &ChannelSet, theta: &CVector) -> Result<Self> {
        let eff = ch
            .direct
            .iter()
            .zip(&ch.cascade)
            .map(|(hs, qs)| hs.iter().zip(qs).map(|(h, q)| effective_channel(h, q, theta)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { eff, noise: ch.noise.clone() })
    }

    pub fn num_aps(&self) -> usize {
        self.eff.len()
    }

    pub fn num_users(&self) -> usize {
        self.noise.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversions() {
        assert_eq!(dbm_to_linear(0.0), 1.0);
        assert!((dbm_to_linear(20.0) - 100.0).abs() < 1e-12);
        assert!((dbm_to_linear(-70.0) - 1e-7).abs() < 1e-20);
    }

    #[test]
    fn pathloss_values() {
        assert_eq!(pathloss_db(1.0, 3.6, -32.0, 1.0).unwrap(), -32.0);
        assert_eq!(pathloss_db(4.0, 2.0, -10.0, 4.0).unwrap(), -10.0);
        assert!((pathloss_db(10.0, 2.2, -32.0, 1.0).unwrap() + 54.0).abs() < 1e-12);
        assert!(matches!(pathloss_db(0.0, 2.0, -32.0, 1.0), Err(Error::DegenerateGeometry(_))));
        assert!(pathloss_db(-1.0, 2.0, -32.0, 1.0).is_err());
    }

    #[test]
    fn default_shapes() {
        let config = ScenarioConfig::default();
        let ch = generate_channels(&config, 3).unwrap();
        assert_eq!(ch.direct.len(), 5);
        assert!(ch.direct.iter().all(|row| row.len() == 4 && row.iter().all(|h| h.len() == 8)));
        assert_eq!(ch.ap_ris[0].shape(), (100, 8));
        assert_eq!(ch.cascade[4][3].shape(), (100, 8));
        assert_eq!(ch.ris_user.len(), 4);
        assert!(ch.random_phases.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn users_stay_in_disk() {
        let config = ScenarioConfig::default();
        for seed in 0..20 {
            let ch = generate_channels(&config, seed).unwrap();
            for p in &ch.user_positions {
                assert!(p.distance(&config.user_circle_center) <= config.user_circle_radius + 1e-12);
            }
        }
    }

    #[test]
    fn coincident_nodes_rejected() {
        let mut config = ScenarioConfig::default();
        config.ris_position = config.ap_positions[2];
        assert!(matches!(generate_channels(&config, 0), Err(Error::DegenerateGeometry(_))));
        let mut config = ScenarioConfig::default();
        config.user_circle_radius = 0.0;
        config.user_circle_center = config.ris_position;
        assert!(matches!(generate_channels(&config, 0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn direct_links_ignore_ris_size() {
        let mut config = ScenarioConfig::default();
        let a = generate_channels(&config, 11).unwrap();
        config.ris_elements = 20;
        let b = generate_channels(&config, 11).unwrap();
        assert_eq!(a.direct, b.direct);
        assert_eq!(a.user_positions, b.user_positions);
        assert_eq!(a.ap_ris[1].rows(0, 20), b.ap_ris[1].rows(0, 20));
    }

    #[test]
    fn effective_channel_identities() {
        let h = CVector::from_vec(vec![C64::new(0.3, -0.2), C64::new(1.0, 0.5)]);
        let q = CMatrix::from_row_slice(1, 2, &[C64::new(0.1, 0.1), C64::new(-0.4, 0.2)]);
        let zero = CVector::zeros(1);
        assert_eq!(effective_channel(&h, &q, &zero).unwrap(), h);

        let phi = 0.7f64;
        let q1 = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let theta = CVector::from_element(1, C64::from_polar(1.0, phi));
        let eff = effective_channel(&CVector::zeros(1), &q1, &theta).unwrap();
        // row form h̃^H = e^{-jφ}
        assert!((eff[0].conj() - C64::from_polar(1.0, -phi)).norm() < 1e-15);

        assert!(matches!(effective_channel(&h, &q, &CVector::zeros(2)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn toml_fills_sized_lists() {
        let config = ScenarioConfig::from_toml_str("num_aps = 3\nnum_users = 2\np_max_dbm = 10.0\n").unwrap();
        assert_eq!(config.ap_positions.len(), 3);
        assert_eq!(config.rate_weights, vec![1.0, 1.0]);
        assert_eq!(config.p_max_dbm, 10.0);
        assert!(ScenarioConfig::from_toml_str("num_users = 2\nrate_weights = [1.0]\n").is_err());
        assert!(ScenarioConfig::from_toml_str("bogus_key = 1\n").is_err());
        let text = ScenarioConfig::default().to_toml_string();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), ScenarioConfig::default());
    }
}
