//! SHA-256 proof-of-work puzzles.
//!
//! A solution `s` is valid for a puzzle when the lowercase hex encoding of
//! `SHA-256(nonce || s)` ends in at least `difficulty` `'0'` characters.
//! Each extra digit multiplies the expected search cost by 16.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const NONCE_LEN: usize = 32;
pub const MAX_SOLUTION_LEN: usize = 64;
/// A SHA-256 digest has 64 hex digits.
pub const MAX_DIGITS: u32 = 64;
pub const DEFAULT_DIFFICULTY_CAP: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PowError {
    #[error("difficulty {difficulty} exceeds cap {cap}")]
    DifficultyAboveCap { difficulty: u32, cap: u32 },
    #[error("nonce must be {NONCE_LEN} bytes encoded as {} hex characters", NONCE_LEN * 2)]
    BadNonce,
    #[error("solution longer than {MAX_SOLUTION_LEN} bytes")]
    SolutionTooLong,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Puzzle {
    nonce: [u8; NONCE_LEN],
    difficulty: u32,
}

impl Puzzle {
    pub fn new(nonce: [u8; NONCE_LEN], difficulty: u32) -> Result<Self, PowError> {
        if difficulty > MAX_DIGITS {
            return Err(PowError::DifficultyAboveCap {
                difficulty,
                cap: MAX_DIGITS,
            });
        }
        Ok(Self { nonce, difficulty })
    }

    pub fn from_hex(nonce_hex: &str, difficulty: u32) -> Result<Self, PowError> {
        if nonce_hex.len() != NONCE_LEN * 2 || nonce_hex.bytes().any(|c| c.is_ascii_uppercase()) {
            return Err(PowError::BadNonce);
        }
        let bytes = hex::decode(nonce_hex).map_err(|_| PowError::BadNonce)?;
        let nonce: [u8; NONCE_LEN] = bytes.try_into().map_err(|_| PowError::BadNonce)?;
        Self::new(nonce, difficulty)
    }

    pub fn nonce(&self) -> &[u8; NONCE_LEN] {
        &self.nonce
    }

    pub fn nonce_hex(&self) -> String {
        hex::encode(self.nonce)
    }

    pub fn difficulty(&self) -> u32 {
        self.difficulty
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Solution(Vec<u8>);

impl Solution {
    pub fn new(bytes: Vec<u8>) -> Result<Self, PowError> {
        if bytes.len() > MAX_SOLUTION_LEN {
            return Err(PowError::SolutionTooLong);
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Wire form. Solutions produced by [`solve`] are ASCII digits.
    pub fn to_wire(&self) -> String {
        String::from_utf8_lossy(&self.0).into_owned()
    }

    pub fn from_wire(s: &str) -> Result<Self, PowError> {
        Self::new(s.as_bytes().to_vec())
    }
}

/// Issues a fresh puzzle with a random nonce.
pub fn new_puzzle<R: Rng + ?Sized>(rng: &mut R, difficulty: u32, cap: u32) -> Result<Puzzle, PowError> {
    if difficulty > cap {
        return Err(PowError::DifficultyAboveCap { difficulty, cap });
    }
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill(&mut nonce[..]);
    Puzzle::new(nonce, difficulty)
}

/// Number of trailing `'0'` characters in the lowercase hex form of `digest`.
pub fn trailing_zero_hex_digits(digest: &[u8]) -> u32 {
    let mut count = 0;
    for &byte in digest.iter().rev() {
        if byte == 0 {
            count += 2;
        } else {
            if byte & 0x0f == 0 {
                count += 1;
            }
            break;
        }
    }
    count
}

pub fn digest(puzzle: &Puzzle, solution: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(puzzle.nonce);
    hasher.update(solution);
    hasher.finalize().into()
}

pub fn verify(puzzle: &Puzzle, solution: &Solution) -> bool {
    if puzzle.difficulty == 0 {
        return true;
    }
    trailing_zero_hex_digits(&digest(puzzle, &solution.0)) >= puzzle.difficulty
}

/// A found solution and how many candidates were hashed to find it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solved {
    pub solution: Solution,
    pub attempts: u64,
}

fn write_decimal(mut n: u64, buf: &mut [u8; 20]) -> &[u8] {
    let mut i = buf.len();
    loop {
        i -= 1;
        buf[i] = b'0' + (n % 10) as u8;
        n /= 10;
        if n == 0 {
            break;
        }
    }
    &buf[i..]
}

/// Searches counters `0, 1, 2, ...` (ASCII decimal) until one verifies or
/// `max_attempts` candidates have been tried.
pub fn solve_bounded(puzzle: &Puzzle, max_attempts: u64) -> Option<Solved> {
    search(puzzle, max_attempts, None)
}

/// Unbounded search that gives up when `cancel` is set.
pub fn solve_cancellable(puzzle: &Puzzle, cancel: &AtomicBool) -> Option<Solved> {
    search(puzzle, u64::MAX, Some(cancel))
}

pub fn solve(puzzle: &Puzzle) -> Solved {
    search(puzzle, u64::MAX, None).expect("unbounded search returns a solution")
}

fn search(puzzle: &Puzzle, max_attempts: u64, cancel: Option<&AtomicBool>) -> Option<Solved> {
    let prefix = Sha256::new_with_prefix(puzzle.nonce);
    let mut buf = [0u8; 20];
    for counter in 0..max_attempts {
        if counter % 4096 == 0 && cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return None;
        }
        let candidate = write_decimal(counter, &mut buf);
        let ok = puzzle.difficulty == 0 || {
            let d: [u8; 32] = prefix.clone().chain_update(candidate).finalize().into();
            trailing_zero_hex_digits(&d) >= puzzle.difficulty
        };
        if ok {
            return Some(Solved {
                solution: Solution(candidate.to_vec()),
                attempts: counter + 1,
            });
        }
    }
    None
}
