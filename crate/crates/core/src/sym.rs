//! Identifier newtypes shared by the symbolic domains.

use serde::Serialize;
use std::fmt;

/// A symbolic heap location. Id 0 is reserved for `nil`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SymLoc(pub u32);

impl SymLoc {
    pub const NIL: SymLoc = SymLoc(0);

    pub fn is_nil(self) -> bool {
        self == Self::NIL
    }
}

impl fmt::Debug for SymLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_nil() {
            write!(f, "nil")
        } else {
            write!(f, "loc#{}", self.0)
        }
    }
}

/// A sequence variable bound to one list-segment atom.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SeqVar(pub u32);

impl fmt::Debug for SeqVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W{}", self.0)
    }
}

/// A logic integer variable (used for segment flag parameters).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IVar(pub u32);

impl fmt::Debug for IVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// An interned program variable (scalar or address typed).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VarId(pub u32);

impl fmt::Debug for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Chunk header fields of HDR.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Field {
    Fnx,
    Size,
    IsFree,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Fnx, Field::Size, Field::IsFree];

    pub fn name(self) -> &'static str {
        match self {
            Field::Fnx => "fnx",
            Field::Size => "size",
            Field::IsFree => "isfree",
        }
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Deterministic fresh-id source threaded through the transformers.
#[derive(Clone, Debug, Default)]
pub struct Gen {
    next_loc: u32,
    next_seq: u32,
    next_ivar: u32,
}

impl Gen {
    /// Starts allocating above the reserved ids.
    pub fn new() -> Gen {
        Gen { next_loc: 1, next_seq: 0, next_ivar: 0 }
    }

    pub fn loc(&mut self) -> SymLoc {
        self.next_loc += 1;
        SymLoc(self.next_loc - 1)
    }

    pub fn seq(&mut self) -> SeqVar {
        self.next_seq += 1;
        SeqVar(self.next_seq - 1)
    }

    pub fn ivar(&mut self) -> IVar {
        self.next_ivar += 1;
        IVar(self.next_ivar - 1)
    }
}
