//! Symbol alphabets and residue-code encoding.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The 20 amino acids plus a trailing gap symbol (q = 21, gap code 20).
pub const PROTEIN_SYMBOLS: &str = "ACDEFGHIKLMNPQRSTVWY-";

/// An ordered set of ASCII symbols defining the residue codes [0, q).
///
/// The gap symbol, when present, is an ordinary state with its own code
/// (conventionally the last one). Characters outside the alphabet encode to
/// the gap code, so ingestion of noisy data never fails on rare symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
    gap_code: Option<u8>,
    lookup: [u8; 256],
}

const NO_CODE: u8 = 0xff;

impl Alphabet {
    /// Builds an alphabet from unique ASCII symbols, in code order.
    pub fn new(symbols: &str, gap_symbol: Option<char>) -> Result<Self> {
        let chars: Vec<char> = symbols.chars().collect();
        if chars.len() < 2 {
            return Err(Error::Alphabet("alphabet needs at least 2 symbols".into()));
        }
        if chars.len() > NO_CODE as usize {
            return Err(Error::Alphabet(format!(
                "alphabet too large: {} symbols",
                chars.len()
            )));
        }
        let mut lookup = [NO_CODE; 256];
        for (code, &ch) in chars.iter().enumerate() {
            if !ch.is_ascii() || ch.is_ascii_control() {
                return Err(Error::Alphabet(format!(
                    "symbol {ch:?} is not printable ASCII"
                )));
            }
            if lookup[ch as usize] != NO_CODE {
                return Err(Error::Alphabet(format!("duplicate symbol {ch:?}")));
            }
            lookup[ch as usize] = code as u8;
        }
        let gap_code = match gap_symbol {
            Some(g) => match chars.iter().position(|&c| c == g) {
                Some(idx) => Some(idx as u8),
                None => {
                    return Err(Error::Alphabet(format!(
                        "gap symbol {g:?} is not in the alphabet"
                    )))
                }
            },
            None => None,
        };
        Ok(Alphabet {
            symbols: chars,
            gap_code,
            lookup,
        })
    }

    /// Standard 21-letter protein alphabet with '-' as the gap.
    pub fn protein() -> Self {
        Alphabet::new(PROTEIN_SYMBOLS, Some('-')).expect("protein alphabet is valid")
    }

    /// Resolves a user-facing alphabet spec: the name "protein" or a literal
    /// symbol string (gap inferred as '-' when present).
    pub fn from_spec(spec: &str) -> Result<Self> {
        if spec == "protein" {
            return Ok(Alphabet::protein());
        }
        let gap = spec.contains('-').then_some('-');
        Alphabet::new(spec, gap)
    }

    pub fn q(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> String {
        self.symbols.iter().collect()
    }

    pub fn gap_code(&self) -> Option<u8> {
        self.gap_code
    }

    pub fn gap_symbol(&self) -> Option<char> {
        self.gap_code.map(|c| self.symbols[c as usize])
    }

    /// Code for an in-alphabet character, or None.
    pub fn code_of(&self, ch: char) -> Option<u8> {
        if !ch.is_ascii() {
            return None;
        }
        let code = self.lookup[ch as usize];
        (code != NO_CODE).then_some(code)
    }

    pub fn symbol_of(&self, code: u8) -> Result<char> {
        self.symbols
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("residue code {code} out of range")))
    }

    /// Encodes one sequence. Out-of-alphabet characters map to the gap code;
    /// if no gap is configured they are an error.
    pub fn encode_seq(&self, seq: &str) -> Result<Vec<u8>> {
        seq.chars()
            .map(|ch| match self.code_of(ch) {
                Some(code) => Ok(code),
                None => self.gap_code.ok_or_else(|| {
                    Error::Alphabet(format!(
                        "character {ch:?} is not in the alphabet and no gap code is configured"
                    ))
                }),
            })
            .collect()
    }

    /// Decodes a row of residue codes back to a string.
    pub fn decode_seq(&self, codes: &[u8]) -> Result<String> {
        codes.iter().map(|&c| self.symbol_of(c)).collect()
    }
}

/// Wire form: `{"symbols": "AB-", "gap_symbol": "-"}`.
#[derive(Serialize, Deserialize)]
struct AlphabetWire {
    symbols: String,
    gap_symbol: Option<char>,
}

impl Serialize for Alphabet {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        AlphabetWire {
            symbols: self.symbols(),
            gap_symbol: self.gap_symbol(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Alphabet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let wire = AlphabetWire::deserialize(de)?;
        Alphabet::new(&wire.symbols, wire.gap_symbol).map_err(serde::de::Error::custom)
    }
}
