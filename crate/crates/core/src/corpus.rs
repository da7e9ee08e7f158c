//! The benchmark corpus: five free-list allocators and their clients.
//!
//! Only LA is printed in full in the literature; the Knuth variants and the
//! K&R allocator are transcribed from their textbook descriptions (fit
//! policy, sorted free list, coalescing discipline) and are validated by the
//! concrete structural monitors before anything is claimed about them.

use crate::memc::{lower, parse, Cfg, LowerError, MemCProgram, ParseError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LA: &str = include_str!("../corpus/LA.memc");
pub const DKFF: &str = include_str!("../corpus/DKff.memc");
pub const DKBF: &str = include_str!("../corpus/DKbf.memc");
pub const DKNF: &str = include_str!("../corpus/DKnf.memc");
pub const KR: &str = include_str!("../corpus/KR.memc");
pub const CLIENT_FIG2: &str = include_str!("../corpus/client_fig2.memc");

/// Free-list discipline a benchmark maintains, for the structural monitors.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ListOrder {
    /// Acyclic, strictly ascending start addresses.
    SortedAcyclic,
    /// One cycle, circularly sorted by start address.
    CircularSorted,
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub source: &'static str,
    pub order: ListOrder,
    /// Reference numbers reported in the literature (max disjuncts,
    /// heap atoms, free atoms); reported next to ours, never asserted.
    pub paper_stats: (u32, u32, u32),
    pub paper_invariants: &'static str,
}

pub const BENCHMARKS: [CorpusEntry; 5] = [
    CorpusEntry {
        name: "DKff",
        source: DKFF,
        order: ListOrder::SortedAcyclic,
        paper_stats: (25, 8, 5),
        paper_invariants: "first-fit, MIN_SIZE-size",
    },
    CorpusEntry {
        name: "DKbf",
        source: DKBF,
        order: ListOrder::SortedAcyclic,
        paper_stats: (26, 8, 6),
        paper_invariants: "best-fit, MIN_SIZE-size",
    },
    CorpusEntry {
        name: "LA",
        source: LA,
        order: ListOrder::SortedAcyclic,
        paper_stats: (25, 8, 5),
        paper_invariants: "first-fit, 0-size",
    },
    CorpusEntry {
        name: "DKnf",
        source: DKNF,
        order: ListOrder::SortedAcyclic,
        paper_stats: (30, 8, 6),
        paper_invariants: "first-fit (roving), MIN_SIZE-size",
    },
    CorpusEntry {
        name: "KR",
        source: KR,
        order: ListOrder::CircularSorted,
        paper_stats: (32, 8, 6),
        paper_invariants: "first-fit, 0-size",
    },
];

pub fn benchmark(name: &str) -> Option<&'static CorpusEntry> {
    BENCHMARKS.iter().find(|b| b.name == name)
}

#[derive(Debug)]
pub enum BuildError {
    Parse(ParseError),
    Lower(LowerError),
}

impl std::fmt::Display for BuildError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BuildError::Parse(e) => write!(f, "parse error: {}", e),
            BuildError::Lower(e) => write!(f, "lowering error: {}", e),
        }
    }
}

impl std::error::Error for BuildError {}

/// Parses allocator + client sources into one program.
pub fn combine(
    allocator: &str,
    client: &str,
    hdr_size_bytes: i64,
) -> Result<MemCProgram, BuildError> {
    let joined = format!("{}\n{}", allocator, client);
    let mut prog = parse(&joined).map_err(BuildError::Parse)?;
    prog.hdr_size_bytes = hdr_size_bytes;
    prog.entry = "main".into();
    Ok(prog)
}

/// Parses and lowers a benchmark with the given client.
pub fn build_cfg(
    allocator: &str,
    client: &str,
    hdr_size_bytes: i64,
) -> Result<Cfg, BuildError> {
    let prog = combine(allocator, client, hdr_size_bytes)?;
    lower(&prog).map_err(BuildError::Lower)
}

/// Generates a deterministic random client: `minit` then at most
/// `max_calls` allocation/deallocation calls over a few pointer slots.
pub fn random_client(seed: u64, max_calls: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = 3usize;
    let mut live = vec![false; slots];
    let mut out = String::new();
    out.push_str("int main(void)\n{\n");
    for i in 0..slots {
        out.push_str(&format!("    void *p{};\n", i));
        out.push_str(&format!("    p{} = NULL;\n", i));
    }
    out.push_str("    minit(1024);\n");
    let calls = rng.gen_range(2..=max_calls);
    for _ in 0..calls {
        let do_free = rng.gen_bool(0.4) && live.iter().any(|l| *l);
        if do_free {
            let mut slot = rng.gen_range(0..slots);
            while !live[slot] {
                slot = (slot + 1) % slots;
            }
            out.push_str(&format!("    mfree(p{});\n", slot));
            out.push_str(&format!("    p{} = NULL;\n", slot));
            live[slot] = false;
        } else {
            let nbytes = rng.gen_range(1..=64);
            if let Some(slot) = live.iter().position(|l| !*l) {
                out.push_str(&format!("    p{} = malloc({});\n", slot, nbytes));
                live[slot] = true;
            } else {
                out.push_str(&format!("    malloc({});\n", nbytes));
            }
        }
    }
    out.push_str("    return 0;\n}\n");
    out
}
