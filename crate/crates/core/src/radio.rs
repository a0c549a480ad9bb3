//! Propagation and PHY-rate selection.
//!
//! Path loss follows the ITU-R indoor site-general model
//! `PL = 20·log10(f_MHz) + N·log10(d_m) + L_f − 28` with a 1 m distance
//! clamp. PHY rates come from per-band MCS tables indexed by RSSI.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, NodeId, Position, RadioConfig, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    /// Distance power loss coefficient `N`.
    pub distance_power_loss_coeff: f64,
    /// Floor penetration loss `L_f`; zero for a single floor.
    pub floor_penetration_db: f64,
    pub constant_offset_db: f64,
    /// Distances below this are clamped before taking the logarithm.
    pub min_distance_m: f64,
    pub frequency_2g4_mhz: f64,
    pub frequency_5g_mhz: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            distance_power_loss_coeff: 31.0,
            floor_penetration_db: 0.0,
            constant_offset_db: -28.0,
            min_distance_m: 1.0,
            frequency_2g4_mhz: Band::Band2G4.nominal_frequency_mhz(),
            frequency_5g_mhz: Band::Band5G.nominal_frequency_mhz(),
        }
    }
}

impl PropagationParams {
    pub fn frequency_mhz(&self, band: Band) -> f64 {
        match band {
            Band::Band2G4 => self.frequency_2g4_mhz,
            Band::Band5G => self.frequency_5g_mhz,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.distance_power_loss_coeff > 0.0) {
            return Err(Error::InvalidParameter(
                "distance power loss coefficient must be positive".into(),
            ));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(Error::InvalidParameter("minimum distance must be positive".into()));
        }
        for f in [self.frequency_2g4_mhz, self.frequency_5g_mhz] {
            if !(f > 0.0 && f < 100_000.0) {
                return Err(Error::InvalidParameter(format!(
                    "band frequency {f} MHz outside (0, 100000)"
                )));
            }
        }
        Ok(())
    }
}

pub fn path_loss_db(f_mhz: f64, d_m: f64, p: &PropagationParams) -> Result<f64> {
    if !(f_mhz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency must be positive, got {f_mhz} MHz"
        )));
    }
    if d_m.is_nan() {
        return Err(Error::InvalidParameter("distance is NaN".into()));
    }
    let d = d_m.max(p.min_distance_m);
    Ok(20.0 * f_mhz.log10()
        + p.distance_power_loss_coeff * d.log10()
        + p.floor_penetration_db
        + p.constant_offset_db)
}

pub fn rssi_dbm(
    tx: &RadioConfig,
    tx_pos: Position,
    rx_pos: Position,
    p: &PropagationParams,
) -> Result<f64> {
    let d = tx_pos.distance(&rx_pos);
    if !d.is_finite() {
        return Err(Error::InvalidParameter("non-finite node position".into()));
    }
    Ok(tx.tx_power_dbm - path_loss_db(p.frequency_mhz(tx.band()), d, p)?)
}

/// Distance at which the RSSI from `tx` falls to `threshold_dbm`.
pub fn max_range_m(tx: &RadioConfig, threshold_dbm: f64, p: &PropagationParams) -> Result<f64> {
    if !(threshold_dbm < tx.tx_power_dbm) {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold_dbm} dBm must be below tx power {} dBm",
            tx.tx_power_dbm
        )));
    }
    let f = p.frequency_mhz(tx.band());
    let exponent = (tx.tx_power_dbm - threshold_dbm
        - p.constant_offset_db
        - p.floor_penetration_db
        - 20.0 * f.log10())
        / p.distance_power_loss_coeff;
    Ok(10f64.powf(exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub mcs: u8,
    pub min_rssi_dbm: f64,
    pub rate_bps_1ss: f64,
    pub rate_bps_2ss: f64,
}

impl McsEntry {
    /// Rate for `ss` spatial streams; beyond two streams the single-stream
    /// rate scales linearly.
    pub fn rate_bps(&self, ss: u8) -> f64 {
        match ss {
            0 | 1 => self.rate_bps_1ss,
            2 => self.rate_bps_2ss,
            n => self.rate_bps_1ss * f64::from(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    pub band: Band,
    pub channel_width_mhz: u32,
    pub entries: Vec<McsEntry>,
}

impl McsTable {
    pub fn check(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidParameter(format!("empty MCS table for {}", self.band)));
        }
        for w in self.entries.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if !(b.min_rssi_dbm > a.min_rssi_dbm)
                || !(b.rate_bps_1ss > a.rate_bps_1ss)
                || !(b.rate_bps_2ss > a.rate_bps_2ss)
            {
                return Err(Error::InvalidParameter(format!(
                    "MCS table for {} not strictly increasing at MCS {} -> {}",
                    self.band, a.mcs, b.mcs
                )));
            }
        }
        if !(self.entries[0].rate_bps_1ss > 0.0) {
            return Err(Error::InvalidParameter("MCS rates must be positive".into()));
        }
        Ok(())
    }

    /// Highest entry whose threshold is met; `None` below entry 0.
    pub fn mcs_for_rssi(&self, rssi_dbm: f64, ss: u8) -> Option<(u8, f64)> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.min_rssi_dbm <= rssi_dbm)
            .map(|e| (e.mcs, e.rate_bps(ss)))
    }

    pub fn lowest(&self) -> &McsEntry {
        &self.entries[0]
    }
}

/// One MCS table per band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<McsTable>", into = "Vec<McsTable>")]
pub struct McsTables {
    pub band_2g4: McsTable,
    pub band_5g: McsTable,
}

impl McsTables {
    pub fn for_band(&self, band: Band) -> &McsTable {
        match band {
            Band::Band2G4 => &self.band_2g4,
            Band::Band5G => &self.band_5g,
        }
    }
}

impl Default for McsTables {
    fn default() -> Self {
        crate::config::Config::builtin().mcs_tables.clone()
    }
}

impl TryFrom<Vec<McsTable>> for McsTables {
    type Error = Error;

    fn try_from(tables: Vec<McsTable>) -> Result<Self> {
        let mut by_band: BTreeMap<Band, McsTable> = BTreeMap::new();
        for t in tables {
            t.check()?;
            let band = t.band;
            if by_band.insert(band, t).is_some() {
                return Err(Error::Config(format!("duplicate MCS table for {band}")));
            }
        }
        let band_2g4 = by_band
            .remove(&Band::Band2G4)
            .ok_or_else(|| Error::MissingMcsTable(Band::Band2G4.to_string()))?;
        let band_5g = by_band
            .remove(&Band::Band5G)
            .ok_or_else(|| Error::MissingMcsTable(Band::Band5G.to_string()))?;
        Ok(McsTables { band_2g4, band_5g })
    }
}

impl From<McsTables> for Vec<McsTable> {
    fn from(t: McsTables) -> Self {
        vec![t.band_2g4, t.band_5g]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkKey {
    pub a: NodeId,
    pub b: NodeId,
    pub band: Band,
}

impl LinkKey {
    pub fn new(x: NodeId, y: NodeId, band: Band) -> Self {
        LinkKey {
            a: x.min(y),
            b: x.max(y),
            band,
        }
    }
}

/// Resolved rate of a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRate {
    pub rssi_dbm: f64,
    /// `None` when the RSSI is above sensitivity but below the lowest MCS
    /// threshold; the link then runs at the lowest MCS.
    pub mcs: Option<u8>,
    pub phy_rate_bps: f64,
}

/// Everything needed to turn node pairs into RSSIs and PHY rates.
///
/// `rssi_overrides` pins the RSSI of specific links (symmetric), which is
/// how measured fixtures bypass geometry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RadioEnv {
    pub propagation: PropagationParams,
    pub mcs: McsTables,
    pub rssi_overrides: BTreeMap<LinkKey, f64>,
}

impl RadioEnv {
    pub fn new(propagation: PropagationParams, mcs: McsTables) -> Self {
        RadioEnv {
            propagation,
            mcs,
            rssi_overrides: BTreeMap::new(),
        }
    }

    pub fn set_override(&mut self, x: NodeId, y: NodeId, band: Band, rssi_dbm: f64) {
        self.rssi_overrides.insert(LinkKey::new(x, y, band), rssi_dbm);
    }

    /// RSSI at `rx` of a transmission from `tx` on `band`.
    pub fn link_rssi(&self, t: &Topology, tx: NodeId, rx: NodeId, band: Band) -> Result<f64> {
        if let Some(v) = self.rssi_overrides.get(&LinkKey::new(tx, rx, band)) {
            return Ok(*v);
        }
        let tx_node = t.node(tx)?;
        let rx_node = t.node(rx)?;
        let radio = tx_node.radio(band).ok_or_else(|| {
            Error::InvalidParameter(format!("node {tx} has no {band} radio"))
        })?;
        rssi_dbm(radio, tx_node.position, rx_node.position, &self.propagation)
    }

    /// RSSI and PHY rate of the `tx -> rx` link. Fails when the receiver
    /// cannot hear the transmitter at all.
    pub fn link_rate(&self, t: &Topology, tx: NodeId, rx: NodeId, band: Band) -> Result<LinkRate> {
        let rssi = self.link_rssi(t, tx, rx, band)?;
        let tx_radio = t
            .node(tx)?
            .radio(band)
            .ok_or_else(|| Error::InvalidParameter(format!("node {tx} has no {band} radio")))?;
        let rx_radio = t
            .node(rx)?
            .radio(band)
            .ok_or_else(|| Error::InvalidParameter(format!("node {rx} has no {band} radio")))?;
        if rssi < rx_radio.sensitivity_dbm {
            return Err(Error::BelowSensitivity {
                tx,
                rx,
                rssi_dbm: rssi,
                sensitivity_dbm: rx_radio.sensitivity_dbm,
            });
        }
        let ss = tx_radio.spatial_streams.min(rx_radio.spatial_streams);
        let table = self.mcs.for_band(band);
        Ok(match table.mcs_for_rssi(rssi, ss) {
            Some((mcs, rate)) => LinkRate {
                rssi_dbm: rssi,
                mcs: Some(mcs),
                phy_rate_bps: rate,
            },
            None => LinkRate {
                rssi_dbm: rssi,
                mcs: None,
                phy_rate_bps: table.lowest().rate_bps(ss),
            },
        })
    }
}
