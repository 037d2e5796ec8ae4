//! SINR, interference and Shannon rate of the V2I/V2V links.
//!
//! Powers are handled in mW; channel gains are linear power gains.

use super::config::NetworkConfig;

/// Linear channel gains for one coherence interval.
pub trait ChannelGains {
    fn m(&self) -> usize;
    fn k(&self) -> usize;
    /// Uplink `m` to the base station on sub-band `m`.
    fn v2i_direct(&self, m: usize) -> f64;
    /// V2V link `k` on sub-band `m`.
    fn v2v_direct(&self, k: usize, m: usize) -> f64;
    /// V2V transmitter `k` to the base station on sub-band `m`.
    fn v2v_to_bs(&self, k: usize, m: usize) -> f64;
    /// Uplink transmitter `m` to V2V receiver `k` on sub-band `m`.
    fn v2i_to_v2v(&self, m: usize, k: usize) -> f64;
    /// V2V transmitter `from` to V2V receiver `to` on sub-band `m`.
    fn v2v_cross(&self, from: usize, to: usize, m: usize) -> f64;
}

/// A V2V transmission: sub-band and transmit power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transmission {
    pub band: usize,
    pub power_mw: f64,
}

/// SINR of uplink `m` under the V2V allocation `alloc` (one entry per agent;
/// `None` means the agent occupies no sub-band).
pub fn v2i_sinr<G: ChannelGains + ?Sized>(m: usize, alloc: &[Option<Transmission>], gains: &G, cfg: &NetworkConfig) -> f64 {
    let signal = cfg.v2i_power_mw() * gains.v2i_direct(m);
    let interference: f64 = alloc
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.filter(|t| t.band == m).map(|t| t.power_mw * gains.v2v_to_bs(k, m)))
        .sum();
    signal / (cfg.noise_mw() + interference)
}

/// Interference (mW) at the receiver of V2V link `k` on sub-band `m`: the
/// uplink on `m` plus every other V2V transmitter on `m`.
pub fn v2v_interference<G: ChannelGains + ?Sized>(
    k: usize,
    m: usize,
    alloc: &[Option<Transmission>],
    gains: &G,
    cfg: &NetworkConfig,
) -> f64 {
    let uplink = cfg.v2i_power_mw() * gains.v2i_to_v2v(m, k);
    let peers: f64 = alloc
        .iter()
        .enumerate()
        .filter(|&(other, _)| other != k)
        .filter_map(|(other, t)| {
            t.filter(|t| t.band == m)
                .map(|t| t.power_mw * gains.v2v_cross(other, k, m))
        })
        .sum();
    uplink + peers
}

/// SINR of V2V link `k` on sub-band `m`; zero when `k` is not transmitting.
pub fn v2v_sinr<G: ChannelGains + ?Sized>(k: usize, m: usize, alloc: &[Option<Transmission>], gains: &G, cfg: &NetworkConfig) -> f64 {
    let Some(own) = alloc[k] else { return 0.0 };
    own.power_mw * gains.v2v_direct(k, m) / (cfg.noise_mw() + v2v_interference(k, m, alloc, gains, cfg))
}

/// Shannon rate in bit/s.
pub fn link_rate(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}
