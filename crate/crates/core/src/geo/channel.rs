//! Link layout and per-interval channel gains.
//!
//! Gains are kept per *physical* directed link so that a channel appearing in
//! several roles (for instance the uplink of a vehicle that also serves as a
//! V2V transmitter) carries one large-scale value and one small-scale draw per
//! sub-band.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::classify::{classify_bs_link, classify_link, LinkClass};
use super::propagation::{db_to_linear, large_scale_gain_db, sample_small_scale, LinkEnd, PropagationConfig, ShadowingState};
use super::scene::{Point, Scene};
use super::GeoError;

/// Which vehicles form the V2V pairs and which carry the V2I uplinks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkLayout {
    /// `(transmitter id, receiver id)` per V2V link.
    pub pairs: Vec<(u32, u32)>,
    /// Uplink transmitter per sub-band.
    pub v2i_users: Vec<u32>,
}

impl LinkLayout {
    pub fn k(&self) -> usize {
        self.pairs.len()
    }

    pub fn m(&self) -> usize {
        self.v2i_users.len()
    }
}

/// Greedy nearest-neighbour pairing. The `k` lowest-id vehicles are the
/// transmitters, so pair `k` always belongs to the same vehicle; in that order
/// each takes the nearest free non-transmitter (lowest id on ties) as its
/// receiver. Uplink `m` belongs to the transmitter of pair `m mod K`.
pub fn pair_vehicles(scene: &Scene, k: usize, m: usize) -> Result<LinkLayout, GeoError> {
    if k == 0 || m == 0 {
        return Err(GeoError::InsufficientVehicles { needed: 2 * k.max(1), available: scene.vehicles.len() });
    }
    if scene.vehicles.len() < 2 * k {
        return Err(GeoError::InsufficientVehicles {
            needed: 2 * k,
            available: scene.vehicles.len(),
        });
    }
    let mut order: Vec<usize> = (0..scene.vehicles.len()).collect();
    order.sort_by_key(|&i| scene.vehicles[i].id);
    let mut taken = vec![false; scene.vehicles.len()];
    for &i in &order[..k] {
        taken[i] = true;
    }
    let mut pairs = Vec::with_capacity(k);
    for &tx in &order[..k] {
        let txp = scene.vehicles[tx].position;
        let rx = order
            .iter()
            .copied()
            .filter(|&i| !taken[i])
            .min_by(|&a, &b| {
                let da = txp.distance(scene.vehicles[a].position);
                let db = txp.distance(scene.vehicles[b].position);
                da.total_cmp(&db)
            })
            .expect("enough vehicles");
        taken[rx] = true;
        pairs.push((scene.vehicles[tx].id, scene.vehicles[rx].id));
    }
    let v2i_users = (0..m).map(|i| pairs[i % k].0).collect();
    Ok(LinkLayout { pairs, v2i_users })
}

/// One directed radio path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalLink {
    pub from: LinkEnd,
    pub to: LinkEnd,
    pub class: LinkClass,
    pub distance_m: f64,
    pub alpha_db: f64,
}

/// Role of a gain in the interference model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GainRole {
    /// Uplink `m` to the base station.
    V2iDirect(usize),
    /// V2V transmitter `k` to its own receiver.
    V2vDirect(usize),
    /// V2V transmitter `k` to the base station.
    V2vToBs(usize),
    /// Uplink transmitter `m` to V2V receiver `k`.
    V2iToV2v(usize, usize),
    /// V2V transmitter `k'` to V2V receiver `k`, `k' != k`.
    V2vCross(usize, usize),
}

/// Large-scale part of the channel, constant across sub-bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeScale {
    pub m: usize,
    pub k: usize,
    pub layout: Option<LinkLayout>,
    pub links: Vec<PhysicalLink>,
    v2i_direct: Vec<usize>,
    v2v_direct: Vec<usize>,
    v2v_to_bs: Vec<usize>,
    v2i_to_v2v: Vec<usize>,
    v2v_cross: Vec<usize>,
}

const NO_LINK: usize = usize::MAX;

impl LargeScale {
    /// Classifies every path of `layout` in `scene` and evaluates its
    /// large-scale gain, advancing the shadowing processes.
    pub fn compute<R: Rng + ?Sized>(
        scene: &Scene,
        layout: &LinkLayout,
        carrier_hz: f64,
        cfg: &PropagationConfig,
        shadow: &mut ShadowingState,
        rng: &mut R,
    ) -> Result<Self, GeoError> {
        let (m, k) = (layout.m(), layout.k());
        let pos = |end: LinkEnd| -> Result<Point, GeoError> {
            match end {
                LinkEnd::BaseStation => Ok(scene.base_station.position),
                LinkEnd::Vehicle(id) => scene
                    .vehicle(id)
                    .map(|v| v.position)
                    .ok_or(GeoError::UnknownVehicle(id)),
            }
        };
        for &(tx, rx) in &layout.pairs {
            if pos(LinkEnd::Vehicle(tx))? == pos(LinkEnd::Vehicle(rx))? {
                return Err(GeoError::CoincidentPair(tx, rx));
            }
        }

        let mut index: BTreeMap<(LinkEnd, LinkEnd), usize> = BTreeMap::new();
        let mut links: Vec<PhysicalLink> = Vec::new();
        let mut intern = |from: LinkEnd, to: LinkEnd| -> Result<usize, GeoError> {
            if let Some(&i) = index.get(&(from, to)) {
                return Ok(i);
            }
            let (a, b) = (pos(from)?, pos(to)?);
            let class = match to {
                LinkEnd::BaseStation => classify_bs_link(a, scene),
                LinkEnd::Vehicle(_) => classify_link(a, b, scene),
            };
            let params = cfg.params(class);
            let shadowing = shadow.advance(from, to, a, b, params.shadowing_sigma_db, cfg.decorrelation_m, rng);
            let alpha_db = large_scale_gain_db(a, b, class, shadowing, carrier_hz, cfg)?;
            links.push(PhysicalLink {
                from,
                to,
                class,
                distance_m: a.distance(b),
                alpha_db,
            });
            index.insert((from, to), links.len() - 1);
            Ok(links.len() - 1)
        };

        let tx = |i: usize| LinkEnd::Vehicle(layout.pairs[i].0);
        let rx = |i: usize| LinkEnd::Vehicle(layout.pairs[i].1);
        let user = |i: usize| LinkEnd::Vehicle(layout.v2i_users[i]);

        let mut v2i_direct = Vec::with_capacity(m);
        for i in 0..m {
            v2i_direct.push(intern(user(i), LinkEnd::BaseStation)?);
        }
        let mut v2v_direct = Vec::with_capacity(k);
        let mut v2v_to_bs = Vec::with_capacity(k);
        for i in 0..k {
            v2v_direct.push(intern(tx(i), rx(i))?);
            v2v_to_bs.push(intern(tx(i), LinkEnd::BaseStation)?);
        }
        let mut v2i_to_v2v = Vec::with_capacity(m * k);
        for i in 0..m {
            for j in 0..k {
                v2i_to_v2v.push(intern(user(i), rx(j))?);
            }
        }
        let mut v2v_cross = vec![NO_LINK; k * k];
        for from in 0..k {
            for to in 0..k {
                if from != to {
                    v2v_cross[from * k + to] = intern(tx(from), rx(to))?;
                }
            }
        }
        Ok(Self {
            m,
            k,
            layout: Some(layout.clone()),
            links,
            v2i_direct,
            v2v_direct,
            v2v_to_bs,
            v2i_to_v2v,
            v2v_cross,
        })
    }

    /// Geometry-free large-scale part with one distinct path per role, for
    /// controlled experiments. `alpha_db` supplies the gain of each role.
    pub fn synthetic(m: usize, k: usize, mut alpha_db: impl FnMut(GainRole) -> f64) -> Self {
        let mut links = Vec::new();
        let mut push = |role: GainRole| {
            links.push(PhysicalLink {
                from: LinkEnd::Vehicle(u32::MAX),
                to: LinkEnd::BaseStation,
                class: LinkClass::Los,
                distance_m: 0.0,
                alpha_db: alpha_db(role),
            });
            links.len() - 1
        };
        let v2i_direct = (0..m).map(|i| push(GainRole::V2iDirect(i))).collect();
        let v2v_direct = (0..k).map(|i| push(GainRole::V2vDirect(i))).collect();
        let v2v_to_bs = (0..k).map(|i| push(GainRole::V2vToBs(i))).collect();
        let mut v2i_to_v2v = Vec::with_capacity(m * k);
        for i in 0..m {
            for j in 0..k {
                v2i_to_v2v.push(push(GainRole::V2iToV2v(i, j)));
            }
        }
        let mut v2v_cross = vec![NO_LINK; k * k];
        for from in 0..k {
            for to in 0..k {
                if from != to {
                    v2v_cross[from * k + to] = push(GainRole::V2vCross(from, to));
                }
            }
        }
        Self {
            m,
            k,
            layout: None,
            links,
            v2i_direct,
            v2v_direct,
            v2v_to_bs,
            v2i_to_v2v,
            v2v_cross,
        }
    }

    pub fn link_index(&self, role: GainRole) -> usize {
        match role {
            GainRole::V2iDirect(m) => self.v2i_direct[m],
            GainRole::V2vDirect(k) => self.v2v_direct[k],
            GainRole::V2vToBs(k) => self.v2v_to_bs[k],
            GainRole::V2iToV2v(m, k) => self.v2i_to_v2v[m * self.k + k],
            GainRole::V2vCross(from, to) => {
                assert_ne!(from, to, "no cross link from a V2V transmitter to its own receiver");
                self.v2v_cross[from * self.k + to]
            }
        }
    }

    pub fn alpha_db(&self, role: GainRole) -> f64 {
        self.links[self.link_index(role)].alpha_db
    }

    pub fn class(&self, role: GainRole) -> LinkClass {
        self.links[self.link_index(role)].class
    }

    /// Every role with the sub-bands it is defined on.
    pub fn roles(&self) -> Vec<(GainRole, Vec<usize>)> {
        let all: Vec<usize> = (0..self.m).collect();
        let mut out = Vec::new();
        out.extend((0..self.m).map(|m| (GainRole::V2iDirect(m), vec![m])));
        out.extend((0..self.k).map(|k| (GainRole::V2vDirect(k), all.clone())));
        out.extend((0..self.k).map(|k| (GainRole::V2vToBs(k), all.clone())));
        for m in 0..self.m {
            out.extend((0..self.k).map(|k| (GainRole::V2iToV2v(m, k), vec![m])));
        }
        for from in 0..self.k {
            for to in (0..self.k).filter(|&t| t != from) {
                out.push((GainRole::V2vCross(from, to), all.clone()));
            }
        }
        out
    }
}

/// Channel power gains for one coherence interval.
///
/// Every linear gain is `10^(alpha_db/10) * h` with `alpha_db` from the shared
/// [`LargeScale`] and `h > 0` the small-scale draw of that path and sub-band.
#[derive(Clone, Debug, PartialEq)]
pub struct GainTensor {
    large: Arc<LargeScale>,
    small: Vec<f64>,
    linear: Vec<f64>,
}

impl GainTensor {
    /// Draws independent small-scale fading for every path and sub-band.
    pub fn draw<R: Rng + ?Sized>(large: Arc<LargeScale>, rng: &mut R) -> Self {
        let m = large.m;
        let small: Vec<f64> = (0..large.links.len() * m).map(|_| sample_small_scale(rng)).collect();
        Self::from_components(large, small)
    }

    /// Rebuilds the tensor from stored components.
    ///
    /// # Panics
    /// If `small` does not hold one positive value per path and sub-band.
    pub fn from_components(large: Arc<LargeScale>, small: Vec<f64>) -> Self {
        let m = large.m;
        assert_eq!(small.len(), large.links.len() * m, "small-scale table shape");
        assert!(small.iter().all(|&h| h > 0.0 && h.is_finite()), "small-scale gains must be positive");
        let linear = large
            .links
            .iter()
            .enumerate()
            .flat_map(|(l, link)| {
                let a = db_to_linear(link.alpha_db);
                small[l * m..(l + 1) * m].iter().map(move |&h| a * h).collect::<Vec<_>>()
            })
            .collect();
        Self { large, small, linear }
    }

    /// Same large-scale part with fresh small-scale fading.
    pub fn redraw<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        Self::draw(Arc::clone(&self.large), rng)
    }

    pub fn large_scale(&self) -> &Arc<LargeScale> {
        &self.large
    }

    pub fn small_scale(&self) -> &[f64] {
        &self.small
    }

    pub fn m(&self) -> usize {
        self.large.m
    }

    pub fn k(&self) -> usize {
        self.large.k
    }

    fn at(&self, role: GainRole, band: usize) -> usize {
        assert!(band < self.large.m, "sub-band {band} out of range");
        self.large.link_index(role) * self.large.m + band
    }

    pub fn gain(&self, role: GainRole, band: usize) -> f64 {
        self.linear[self.at(role, band)]
    }

    pub fn small(&self, role: GainRole, band: usize) -> f64 {
        self.small[self.at(role, band)]
    }

    /// Number of entries per role family, in the order
    /// `[v2i_direct, v2v_direct, v2v_to_bs, v2i_to_v2v, v2v_cross]`.
    pub fn family_sizes(&self) -> [usize; 5] {
        let (m, k) = (self.large.m, self.large.k);
        [m, k * m, k * m, m * k, k * k.saturating_sub(1) * m]
    }
}

impl crate::env::ChannelGains for GainTensor {
    fn m(&self) -> usize {
        self.large.m
    }
    fn k(&self) -> usize {
        self.large.k
    }
    fn v2i_direct(&self, m: usize) -> f64 {
        self.gain(GainRole::V2iDirect(m), m)
    }
    fn v2v_direct(&self, k: usize, m: usize) -> f64 {
        self.gain(GainRole::V2vDirect(k), m)
    }
    fn v2v_to_bs(&self, k: usize, m: usize) -> f64 {
        self.gain(GainRole::V2vToBs(k), m)
    }
    fn v2i_to_v2v(&self, m: usize, k: usize) -> f64 {
        self.gain(GainRole::V2iToV2v(m, k), m)
    }
    fn v2v_cross(&self, from: usize, to: usize, m: usize) -> f64 {
        self.gain(GainRole::V2vCross(from, to), m)
    }
}

/// Pairs vehicles, evaluates large-scale gains and draws small-scale fading
/// for one coherence interval.
pub fn channel_snapshot<R: Rng + ?Sized>(
    scene: &Scene,
    layout: &LinkLayout,
    carrier_hz: f64,
    cfg: &PropagationConfig,
    shadow: &mut ShadowingState,
    rng: &mut R,
) -> Result<GainTensor, GeoError> {
    let large = LargeScale::compute(scene, layout, carrier_hz, cfg, shadow, rng)?;
    Ok(GainTensor::draw(Arc::new(large), rng))
}
