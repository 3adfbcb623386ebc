//! Bayer color filter array layouts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Color of a single CFA site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    R = 0,
    G = 1,
    B = 2,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// The four phases of the 2x2 Bayer tile, named by raster order of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CfaLayout {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaLayout {
    pub const ALL: [CfaLayout; 4] = [
        CfaLayout::Rggb,
        CfaLayout::Bggr,
        CfaLayout::Grbg,
        CfaLayout::Gbrg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CfaLayout::Rggb => "RGGB",
            CfaLayout::Bggr => "BGGR",
            CfaLayout::Grbg => "GRBG",
            CfaLayout::Gbrg => "GBRG",
        }
    }

    fn cell(self) -> [[Channel; 2]; 2] {
        use Channel::*;
        match self {
            CfaLayout::Rggb => [[R, G], [G, B]],
            CfaLayout::Bggr => [[B, G], [G, R]],
            CfaLayout::Grbg => [[G, R], [B, G]],
            CfaLayout::Gbrg => [[G, B], [R, G]],
        }
    }
}

impl fmt::Display for CfaLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CfaLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaLayout::Rggb),
            "BGGR" => Ok(CfaLayout::Bggr),
            "GRBG" => Ok(CfaLayout::Grbg),
            "GBRG" => Ok(CfaLayout::Gbrg),
            _ => Err(Error::UnknownPattern(s.to_string())),
        }
    }
}

/// A 2x2 binary template per color; the whole image uses the template tiled
/// (Kronecker product with an all-ones matrix).
pub type Template = [[u8; 2]; 2];

/// A Bayer layout together with its three site-selection templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CfaPattern {
    layout: CfaLayout,
    cell: [[Channel; 2]; 2],
}

impl CfaPattern {
    pub fn new(layout: CfaLayout) -> Self {
        let pattern = CfaPattern {
            layout,
            cell: layout.cell(),
        };
        debug_assert!(pattern.templates_partition_cell());
        pattern
    }

    pub fn layout(&self) -> CfaLayout {
        self.layout
    }

    /// Color captured at image position `(row, col)`.
    #[inline]
    pub fn color_at(&self, row: usize, col: usize) -> Channel {
        self.cell[row & 1][col & 1]
    }

    /// Template `P_k` for one color: 1 where the cell captures `channel`.
    pub fn template(&self, channel: Channel) -> Template {
        let mut t = [[0u8; 2]; 2];
        for (r, row) in t.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = u8::from(self.cell[r][c] == channel);
            }
        }
        t
    }

    /// Templates in `[P_R, P_G, P_B]` order.
    pub fn templates(&self) -> [Template; 3] {
        Channel::ALL.map(|c| self.template(c))
    }

    /// Offsets inside the cell in `[R, G1, G2, B]` order; the two greens are
    /// ordered by raster position.
    pub fn channel_offsets(&self) -> [(usize, usize); 4] {
        let mut greens = Vec::with_capacity(2);
        let mut red = (0, 0);
        let mut blue = (0, 0);
        for r in 0..2 {
            for c in 0..2 {
                match self.cell[r][c] {
                    Channel::R => red = (r, c),
                    Channel::G => greens.push((r, c)),
                    Channel::B => blue = (r, c),
                }
            }
        }
        [red, greens[0], greens[1], blue]
    }

    fn templates_partition_cell(&self) -> bool {
        let [pr, pg, pb] = self.templates();
        let ones = |t: &Template| t.iter().flatten().filter(|&&v| v == 1).count();
        let partition = (0..2).all(|r| (0..2).all(|c| pr[r][c] + pg[r][c] + pb[r][c] == 1));
        partition && ones(&pr) == 1 && ones(&pg) == 2 && ones(&pb) == 1
    }
}

impl From<CfaLayout> for CfaPattern {
    fn from(layout: CfaLayout) -> Self {
        CfaPattern::new(layout)
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<CfaLayout>().map(CfaPattern::new)
    }
}

/// Looks up a pattern by name, ignoring case.
pub fn pattern_of(name: &str) -> Result<CfaPattern> {
    name.parse()
}
