use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::groupcrypto::{EncryptedAmount, PriceRange, UserId};
use crate::pricing::WeightVector;

/// A party on the bus. Buyers are addressed by their bus slot, which exists
/// before registration assigns a user id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyId {
    Mms,
    Ttp,
    Buyer(usize),
}

impl PartyId {
    pub fn is_buyer(&self) -> bool {
        matches!(self, PartyId::Buyer(_))
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Mms => f.write_str("mms"),
            PartyId::Ttp => f.write_str("ttp"),
            PartyId::Buyer(n) => write!(f, "buyer:{n}"),
        }
    }
}

impl FromStr for PartyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mms" => Ok(PartyId::Mms),
            "ttp" => Ok(PartyId::Ttp),
            _ => s
                .strip_prefix("buyer:")
                .and_then(|n| n.parse().ok())
                .map(PartyId::Buyer)
                .ok_or_else(|| format!("unknown party `{s}`")),
        }
    }
}

impl Serialize for PartyId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The immutable tuple archived at TTP for every successful consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionRecord {
    pub consumption_id: u64,
    pub user_id: UserId,
    pub query: String,
    pub weights: WeightVector,
    pub price_cipher: EncryptedAmount,
    pub quoted_range: PriceRange,
    pub pre_balance_cipher: EncryptedAmount,
    pub post_balance_cipher: EncryptedAmount,
    /// Bus step at which the charge was made.
    pub timestamp: u64,
    /// Plaintext price in minor units, present only when escrowed to TTP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escrowed_price: Option<u64>,
}

/// What a buyer keeps from a purchase to verify it later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub consumption_id: u64,
    pub quoted_range: PriceRange,
    pub price_cipher: EncryptedAmount,
    pub pre_balance_cipher: EncryptedAmount,
    pub post_balance_cipher: EncryptedAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeVerdict {
    Yes,
    No,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Payload {
    RegisterReq,
    RegisterResp {
        user_id: UserId,
        public_key: String,
        secret_key: String,
    },
    RegistrationPush {
        user_id: UserId,
        #[serde(with = "crate::groupcrypto::hex_biguint")]
        generator: num_bigint::BigUint,
    },
    RegistrationAck {
        user_id: UserId,
    },
    QueryReq {
        user_id: UserId,
        query: String,
        weights: WeightVector,
    },
    Quote {
        session: u64,
        range: PriceRange,
        price_cipher: EncryptedAmount,
        /// Debug leak mode only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        price: Option<f64>,
    },
    Agree {
        session: u64,
    },
    ConsumeResp {
        session: u64,
        consumption_id: u64,
        price_cipher: EncryptedAmount,
        pre_balance_cipher: EncryptedAmount,
        post_balance_cipher: EncryptedAmount,
        columns: Vec<String>,
        rows: Vec<Vec<String>>,
    },
    Decline {
        session: u64,
    },
    Declined {
        session: u64,
    },
    BalanceReq {
        user_id: UserId,
    },
    BalanceResp {
        balance_cipher: EncryptedAmount,
    },
    BalanceRangeReq {
        user_id: UserId,
    },
    BalanceRangeResp {
        balance_range: PriceRange,
    },
    RechargeReq {
        user_id: UserId,
        amount: f64,
    },
    RechargeResp {
        balance_cipher: EncryptedAmount,
    },
    RechargePush {
        user_id: UserId,
        amount_cipher: EncryptedAmount,
        seq_no: u64,
    },
    RechargeAck {
        user_id: UserId,
        seq_no: u64,
    },
    CheckBalanceReq {
        user_id: UserId,
        balance_cipher: EncryptedAmount,
    },
    CheckBalanceResp {
        ok: bool,
    },
    VerifyRangeReq {
        consumption_id: u64,
        user_id: UserId,
        range: PriceRange,
        price_cipher: EncryptedAmount,
    },
    VerifyRangeResp {
        consumption_id: u64,
        verdict: RangeVerdict,
    },
    ArchivePush {
        record: ConsumptionRecord,
    },
    ArchiveAck {
        consumption_id: u64,
    },
    /// The failure response to any request.
    Error {
        code: String,
        detail: String,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        use Payload::*;
        match self {
            RegisterReq => "RegisterReq",
            RegisterResp { .. } => "RegisterResp",
            RegistrationPush { .. } => "RegistrationPush",
            RegistrationAck { .. } => "RegistrationAck",
            QueryReq { .. } => "QueryReq",
            Quote { .. } => "Quote",
            Agree { .. } => "Agree",
            ConsumeResp { .. } => "ConsumeResp",
            Decline { .. } => "Decline",
            Declined { .. } => "Declined",
            BalanceReq { .. } => "BalanceReq",
            BalanceResp { .. } => "BalanceResp",
            BalanceRangeReq { .. } => "BalanceRangeReq",
            BalanceRangeResp { .. } => "BalanceRangeResp",
            RechargeReq { .. } => "RechargeReq",
            RechargeResp { .. } => "RechargeResp",
            RechargePush { .. } => "RechargePush",
            RechargeAck { .. } => "RechargeAck",
            CheckBalanceReq { .. } => "CheckBalanceReq",
            CheckBalanceResp { .. } => "CheckBalanceResp",
            VerifyRangeReq { .. } => "VerifyRangeReq",
            VerifyRangeResp { .. } => "VerifyRangeResp",
            ArchivePush { .. } => "ArchivePush",
            ArchiveAck { .. } => "ArchiveAck",
            Error { .. } => "Error",
        }
    }

    /// The success response kind for a request kind; `None` for responses.
    /// Any request may instead be answered with `Error`.
    pub fn response_kind(kind: &str) -> Option<&'static str> {
        Some(match kind {
            "RegisterReq" => "RegisterResp",
            "RegistrationPush" => "RegistrationAck",
            "QueryReq" => "Quote",
            "Agree" => "ConsumeResp",
            "Decline" => "Declined",
            "BalanceReq" => "BalanceResp",
            "BalanceRangeReq" => "BalanceRangeResp",
            "RechargeReq" => "RechargeResp",
            "RechargePush" => "RechargeAck",
            "CheckBalanceReq" => "CheckBalanceResp",
            "VerifyRangeReq" => "VerifyRangeResp",
            "ArchivePush" => "ArchiveAck",
            _ => return None,
        })
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Payload {
        Payload::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub sender: PartyId,
    pub receiver: PartyId,
    /// Per-sender sequence number.
    pub seq: u64,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Envelope {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelopes serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn party_ids_round_trip_as_strings() {
        for p in [PartyId::Mms, PartyId::Ttp, PartyId::Buyer(7)] {
            let j = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<PartyId>(&j).unwrap(), p);
        }
        assert_eq!(serde_json::to_string(&PartyId::Buyer(3)).unwrap(), "\"buyer:3\"");
        assert!("buyer:x".parse::<PartyId>().is_err());
    }

    #[test]
    fn envelope_has_flat_kind_and_payload() {
        let env = Envelope {
            sender: PartyId::Mms,
            receiver: PartyId::Buyer(0),
            seq: 4,
            payload: Payload::Quote {
                session: 9,
                range: PriceRange::new(1.0, 4.0),
                price_cipher: EncryptedAmount::from(2),
                price: None,
            },
        };
        let v: serde_json::Value = serde_json::from_str(&env.to_json()).unwrap();
        assert_eq!(v["kind"], "Quote");
        assert_eq!(v["sender"], "mms");
        assert_eq!(v["receiver"], "buyer:0");
        assert_eq!(v["seq"], 4);
        assert_eq!(v["payload"]["price_cipher"], "2");
        assert!(v["payload"].get("price").is_none());
        let back: Envelope = serde_json::from_str(&env.to_json()).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn unit_request_round_trips() {
        let env = Envelope {
            sender: PartyId::Buyer(1),
            receiver: PartyId::Mms,
            seq: 0,
            payload: Payload::RegisterReq,
        };
        let back: Envelope = serde_json::from_str(&env.to_json()).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn every_request_has_one_response_kind() {
        let requests = [
            "RegisterReq",
            "RegistrationPush",
            "QueryReq",
            "Agree",
            "Decline",
            "BalanceReq",
            "BalanceRangeReq",
            "RechargeReq",
            "RechargePush",
            "CheckBalanceReq",
            "VerifyRangeReq",
            "ArchivePush",
        ];
        let mut seen = std::collections::HashSet::new();
        for r in requests {
            let resp = Payload::response_kind(r).unwrap();
            assert!(seen.insert(resp), "{resp} answers two requests");
            assert!(Payload::response_kind(resp).is_none());
        }
    }
}
