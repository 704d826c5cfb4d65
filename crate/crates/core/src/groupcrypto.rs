//! Multiplicative-group arithmetic behind price hiding.
//!
//! Amounts are encrypted as `g_i^amount mod n` for a per-user generator
//! `g_i` of `Z_n^*`, `n` a safe prime. The map is a homomorphism from
//! (amounts, +) to (ciphertexts, *), so `E(b1) * E(b2)^-1 == E(b1 - b2)`
//! lets a buyer check a debit without learning either amount.
//!
//! The scheme is deterministic: equal amounts under one credential give equal
//! ciphertexts.

use std::fmt;

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("randomness source failed: {0}")]
    RandomnessFailure(String),
    #[error("amount {0} is negative")]
    NegativeAmount(i64),
    #[error("amount {amount} does not fit below the group order")]
    AmountExceedsOrder { amount: i64 },
    #[error("{0:x} has no inverse modulo the group modulus")]
    NotInvertible(BigUint),
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
    #[error("{0:x} is not an element of the group")]
    NotAnElement(BigUint),
}

pub type Result<T> = std::result::Result<T, CryptoError>;

/// 2^64 - 1469, the largest 64-bit safe prime.
const TEST_MODULUS_HEX: &str = "fffffffffffffa43";

/// The 2048-bit MODP safe prime of RFC 3526 (group 14).
const REAL_MODULUS_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DD\
EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F\
83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA0510\
15728E5A8AACAA68FFFFFFFFFFFFFFFF";

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupProfile {
    /// `n = 5`, generator pinned to 3, whole currency units. Reproduces the
    /// textbook trace; offers no security.
    Toy,
    /// 64-bit safe prime, amounts in cents.
    #[default]
    Test,
    /// 2048-bit safe prime, amounts in cents.
    Real,
}

impl GroupProfile {
    pub fn params(self) -> GroupParams {
        match self {
            GroupProfile::Toy => {
                let mut p = GroupParams::from_safe_prime(BigUint::from(5u32)).expect("5 is a safe prime");
                p.pinned_generator = Some(BigUint::from(3u32));
                p.cap_amounts = false;
                p
            }
            GroupProfile::Test => GroupParams::from_hex(TEST_MODULUS_HEX).expect("test modulus"),
            GroupProfile::Real => GroupParams::from_hex(REAL_MODULUS_HEX).expect("real modulus"),
        }
    }

    /// Minor units per currency unit.
    pub fn money_scale(self) -> u64 {
        match self {
            GroupProfile::Toy => 1,
            GroupProfile::Test | GroupProfile::Real => 100,
        }
    }

    pub fn range_policy(self) -> RangePolicy {
        match self {
            GroupProfile::Toy => RangePolicy { width_ratio: 1.0 },
            GroupProfile::Test | GroupProfile::Real => RangePolicy::default(),
        }
    }
}

/// `Z_n^*` for a safe prime `n = 2q + 1`; the group order is `n - 1`.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    modulus: BigUint,
    order: BigUint,
    half_order: BigUint,
    /// Registration hands out this generator instead of sampling one.
    pub pinned_generator: Option<BigUint>,
    /// Reject amounts at or above the group order.
    pub cap_amounts: bool,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("modulus", &format_args!("{:x}", self.modulus))
            .field("bits", &self.security_bits())
            .finish()
    }
}

impl GroupParams {
    pub fn from_safe_prime(modulus: BigUint) -> Result<Self> {
        if modulus < BigUint::from(5u32) {
            return Err(CryptoError::InvalidParams("modulus must be at least 5".into()));
        }
        let order = &modulus - 1u32;
        let half_order = &order >> 1;
        if !is_probable_prime(&modulus) || !is_probable_prime(&half_order) {
            return Err(CryptoError::InvalidParams(format!("{modulus:x} is not a safe prime")));
        }
        Ok(GroupParams {
            modulus,
            order,
            half_order,
            pinned_generator: None,
            cap_amounts: true,
        })
    }

    pub fn from_hex(hex: &str) -> Result<Self> {
        let n = BigUint::parse_bytes(hex.as_bytes(), 16)
            .ok_or_else(|| CryptoError::InvalidParams(format!("bad hex modulus `{hex}`")))?;
        GroupParams::from_safe_prime(n)
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// `|G| = n - 1`.
    pub fn order(&self) -> &BigUint {
        &self.order
    }

    /// Bit length of the group order.
    pub fn security_bits(&self) -> u64 {
        self.order.bits()
    }

    pub fn contains(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.modulus
    }

    /// True iff `g` generates the whole group.
    pub fn is_generator(&self, g: &BigUint) -> bool {
        self.contains(g) && !g.is_one() && *g != self.order && !g.modpow(&self.half_order, &self.modulus).is_one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A buyer's registration output.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserCredential {
    pub user_id: UserId,
    #[serde(with = "hex_biguint")]
    pub generator: BigUint,
    /// Channel-authentication key material; opaque to the pricing protocol.
    pub secret_key: String,
    pub public_key: String,
}

impl fmt::Debug for UserCredential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserCredential")
            .field("user_id", &self.user_id)
            .field("generator", &format_args!("{:x}", self.generator))
            .field("public_key", &self.public_key)
            .finish_non_exhaustive()
    }
}

/// Hands out unique user ids starting at 1.
#[derive(Debug, Clone)]
pub struct Registrar {
    next: u64,
}

impl Default for Registrar {
    fn default() -> Self {
        Registrar { next: 1 }
    }
}

impl Registrar {
    pub fn reg<R: RngCore + ?Sized>(&mut self, params: &GroupParams, rng: &mut R) -> Result<UserCredential> {
        let generator = match &params.pinned_generator {
            Some(g) => g.clone(),
            None => sample_generator(params, rng),
        };
        let mut secret = [0u8; 32];
        rng.try_fill_bytes(&mut secret)
            .map_err(|e| CryptoError::RandomnessFailure(e.to_string()))?;
        let public = Sha256::digest(secret);
        let user_id = UserId(self.next);
        self.next += 1;
        Ok(UserCredential {
            user_id,
            generator,
            secret_key: to_hex(&secret),
            public_key: to_hex(&public),
        })
    }
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Uniform over the generators of the group, by rejection.
fn sample_generator<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> BigUint {
    let lo = BigUint::from(2u32);
    loop {
        let g = rng.gen_biguint_range(&lo, &params.order);
        if params.is_generator(&g) {
            return g;
        }
    }
}

/// A group element standing for a hidden amount. Serializes as lowercase hex.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct EncryptedAmount(pub BigUint);

impl EncryptedAmount {
    pub fn identity() -> Self {
        EncryptedAmount(BigUint::one())
    }

    pub fn to_hex(&self) -> String {
        format!("{:x}", self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        BigUint::parse_bytes(s.as_bytes(), 16).map(EncryptedAmount)
    }

    pub fn mul(&self, other: &EncryptedAmount, params: &GroupParams) -> EncryptedAmount {
        EncryptedAmount((&self.0 * &other.0) % params.modulus())
    }
}

impl fmt::Debug for EncryptedAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E({:x})", self.0)
    }
}

impl fmt::Display for EncryptedAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x}", self.0)
    }
}

impl From<u64> for EncryptedAmount {
    fn from(v: u64) -> Self {
        EncryptedAmount(BigUint::from(v))
    }
}

impl Serialize for EncryptedAmount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        hex_biguint::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for EncryptedAmount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        hex_biguint::deserialize(d).map(EncryptedAmount)
    }
}

pub(crate) mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        if s.is_empty() || s.bytes().any(|b| !matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(D::Error::custom(format!("`{s}` is not lowercase hex")));
        }
        BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(|| D::Error::custom("bad hex"))
    }
}

/// `g_i^amount mod n`.
pub fn enc(cred: &UserCredential, params: &GroupParams, amount: i64) -> Result<EncryptedAmount> {
    if amount < 0 {
        return Err(CryptoError::NegativeAmount(amount));
    }
    let exp = BigUint::from(amount as u64);
    if params.cap_amounts && &exp >= params.order() {
        return Err(CryptoError::AmountExceedsOrder { amount });
    }
    Ok(EncryptedAmount(cred.generator.modpow(&exp, params.modulus())))
}

/// Extended Euclid: returns `(g, x, y)` with `a*x + b*y = g = gcd(a, b)`.
pub fn extended_gcd(a: &BigInt, b: &BigInt) -> (BigInt, BigInt, BigInt) {
    let (mut old_r, mut r) = (a.clone(), b.clone());
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    let (mut old_t, mut t) = (BigInt::zero(), BigInt::one());
    while !r.is_zero() {
        let q = old_r.div_floor(&r);
        let next_r = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_s = &old_s - &q * &s;
        old_s = std::mem::replace(&mut s, next_s);
        let next_t = &old_t - &q * &t;
        old_t = std::mem::replace(&mut t, next_t);
    }
    (old_r, old_s, old_t)
}

/// Multiplicative inverse modulo `n` by extended Euclid.
pub fn inv(e: &EncryptedAmount, params: &GroupParams) -> Result<EncryptedAmount> {
    let n = BigInt::from_biguint(Sign::Plus, params.modulus().clone());
    let a = BigInt::from_biguint(Sign::Plus, &e.0 % params.modulus());
    let (g, x, _) = extended_gcd(&a, &n);
    if !g.is_one() {
        return Err(CryptoError::NotInvertible(e.0.clone()));
    }
    let x = x.mod_floor(&n);
    Ok(EncryptedAmount(x.to_biguint().expect("reduced into [0, n)")))
}

/// YES iff `E_B1 * E_B2^-1 == E_p (mod n)`.
pub fn verify_consumption(
    pre_balance: &EncryptedAmount,
    price: &EncryptedAmount,
    post_balance: &EncryptedAmount,
    params: &GroupParams,
) -> Result<bool> {
    for x in [pre_balance, price, post_balance] {
        if !params.contains(&x.0) {
            return Err(CryptoError::NotAnElement(x.0.clone()));
        }
    }
    let lhs = pre_balance.mul(&inv(post_balance, params)?, params);
    Ok(lhs == *price)
}

/// Width rule for quoted ranges: `max(1, round(width_ratio * reference))`
/// minor units; a ratio of 0 yields degenerate ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangePolicy {
    pub width_ratio: f64,
}

impl Default for RangePolicy {
    fn default() -> Self {
        RangePolicy { width_ratio: 0.5 }
    }
}

impl RangePolicy {
    pub fn width(&self, reference: u64) -> u64 {
        if self.width_ratio <= 0.0 {
            0
        } else {
            ((self.width_ratio * reference as f64).round() as u64).max(1)
        }
    }
}

/// A price interval in currency units, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRange {
    pub lo: f64,
    pub hi: f64,
}

impl PriceRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        PriceRange { lo, hi }
    }

    /// Bit-exact equality on both endpoints.
    pub fn same_as(&self, other: &PriceRange) -> bool {
        self.lo.to_bits() == other.lo.to_bits() && self.hi.to_bits() == other.hi.to_bits()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    /// The integer minor-unit amounts inside the range.
    pub fn minor_bounds(&self, scale: u64) -> Option<(u64, u64)> {
        let snap = |v: f64| {
            let r = v.round();
            if (v - r).abs() < 1e-6 {
                r
            } else {
                v
            }
        };
        let lo = snap(self.lo * scale as f64).ceil().max(0.0);
        let hi = snap(self.hi * scale as f64).floor();
        (lo <= hi && hi >= 0.0).then_some((lo as u64, hi as u64))
    }

    pub fn contains_minor(&self, amount: u64, scale: u64) -> bool {
        self.minor_bounds(scale).is_some_and(|(lo, hi)| (lo..=hi).contains(&amount))
    }
}

impl fmt::Display for PriceRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Converts a currency amount to minor units, rounding half up.
pub fn to_minor_units(amount: f64, scale: u64) -> u64 {
    let v = (amount * scale as f64 + 0.5).floor();
    if v <= 0.0 {
        0
    } else {
        v as u64
    }
}

/// A range of `width` minor units containing `price`, with the price at a
/// uniformly random offset. The lower end never goes below zero.
pub fn make_range<R: Rng + ?Sized>(price: u64, width: u64, scale: u64, rng: &mut R) -> PriceRange {
    let offset = rng.gen_range(0..=width.min(price));
    let lo = price - offset;
    let hi = lo + width;
    PriceRange::new(lo as f64 / scale as f64, hi as f64 / scale as f64)
}

/// Miller-Rabin with the first 16 prime bases; deterministic below 2^64 and
/// overwhelmingly reliable above.
pub fn is_probable_prime(n: &BigUint) -> bool {
    const BASES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for b in BASES {
        let b = BigUint::from(b);
        if *n == b {
            return true;
        }
        if (n % &b).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for b in BASES {
        let mut x = BigUint::from(b).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (GroupParams, UserCredential) {
        let params = GroupProfile::Toy.params();
        let cred = Registrar::default()
            .reg(&params, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        (params, cred)
    }

    fn e(v: u64) -> EncryptedAmount {
        EncryptedAmount::from(v)
    }

    /// Brute-force inverse: the y in [1, n) with x*y = 1 (mod n).
    fn inverse_by_search(x: u64, n: u64) -> Option<u64> {
        (1..n).find(|y| (x * y) % n == 1)
    }

    #[test]
    fn toy_registration() {
        let (_, cred) = toy();
        assert_eq!(cred.user_id, UserId(1));
        assert_eq!(cred.generator, BigUint::from(3u32));
    }

    #[test]
    fn successive_ids_are_distinct() {
        let params = GroupProfile::Test.params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut reg = Registrar::default();
        let a = reg.reg(&params, &mut rng).unwrap();
        let b = reg.reg(&params, &mut rng).unwrap();
        assert_ne!(a.user_id, b.user_id);
        assert_ne!(a.secret_key, b.secret_key);
    }

    #[test]
    fn sampled_generators_are_members_and_generate() {
        let params = GroupParams::from_safe_prime(BigUint::from(65063u32)).unwrap();
        assert_eq!(params.security_bits(), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut reg = Registrar::default();
        for _ in 0..20 {
            let g = reg.reg(&params, &mut rng).unwrap().generator;
            let n = params.modulus();
            assert!(g >= BigUint::from(2u32) && g < n - 1u32);
            // membership: g^(n-1) = 1; full order: no smaller power of the form (n-1)/f is 1
            assert!(g.modpow(params.order(), n).is_one());
            assert!(!g.modpow(&BigUint::from(2u32), n).is_one());
            assert!(!g.modpow(&(params.order() >> 1), n).is_one());
        }
    }

    #[test]
    fn toy_encryption_trace() {
        let (params, cred) = toy();
        assert_eq!(enc(&cred, &params, 4).unwrap(), e(1));
        assert_eq!(enc(&cred, &params, 3).unwrap(), e(2));
        assert_eq!(enc(&cred, &params, 0).unwrap(), EncryptedAmount::identity());
        assert_eq!(enc(&cred, &params, -1), Err(CryptoError::NegativeAmount(-1)));
    }

    #[test]
    fn cap_applies_outside_toy() {
        let params = GroupProfile::Test.params();
        let cred = Registrar::default().reg(&params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(enc(&cred, &params, i64::MAX).is_ok());
        let small = GroupParams::from_safe_prime(BigUint::from(23u32)).unwrap();
        let cred = UserCredential { generator: BigUint::from(5u32), ..cred };
        assert!(matches!(enc(&cred, &small, 22), Err(CryptoError::AmountExceedsOrder { .. })));
        assert!(enc(&cred, &small, 21).is_ok());
    }

    #[test]
    fn toy_inverses() {
        let (params, _) = toy();
        assert_eq!(inv(&e(2), &params).unwrap(), e(3));
        assert_eq!(inv(&e(3), &params).unwrap(), e(2));
        assert_eq!(inv(&e(1), &params).unwrap(), e(1));
        assert!(matches!(inv(&e(0), &params), Err(CryptoError::NotInvertible(_))));
        assert!(matches!(inv(&e(5), &params), Err(CryptoError::NotInvertible(_))));
    }

    #[test]
    fn inverse_matches_search_oracle() {
        let params = GroupParams::from_safe_prime(BigUint::from(1019u32)).unwrap();
        for x in 1..1019u64 {
            let got = inv(&e(x), &params).unwrap();
            assert_eq!(got, e(inverse_by_search(x, 1019).unwrap()), "x={x}");
        }
    }

    #[test]
    fn extended_gcd_bezout() {
        let (a, b) = (BigInt::from(240), BigInt::from(46));
        let (g, x, y) = extended_gcd(&a, &b);
        assert_eq!(g, BigInt::from(2));
        assert_eq!(&a * &x + &b * &y, g);
    }

    #[test]
    fn verify_cases() {
        let (params, _) = toy();
        assert!(verify_consumption(&e(1), &e(2), &e(3), &params).unwrap());
        assert!(!verify_consumption(&e(1), &e(2), &e(4), &params).unwrap());
        for x in 1..5 {
            assert!(verify_consumption(&e(x), &EncryptedAmount::identity(), &e(x), &params).unwrap());
        }
        assert!(matches!(
            verify_consumption(&e(0), &e(2), &e(3), &params),
            Err(CryptoError::NotAnElement(_))
        ));
    }

    #[test]
    fn exhaustive_homomorphism_on_toy() {
        let (params, cred) = toy();
        for a in 0..=50i64 {
            for b in 0..=a {
                let lhs = enc(&cred, &params, a).unwrap().mul(&inv(&enc(&cred, &params, a - b).unwrap(), &params).unwrap(), &params);
                assert_eq!(lhs, enc(&cred, &params, b).unwrap());
            }
        }
    }

    #[test]
    fn ciphers_serialize_as_lowercase_hex() {
        let c = EncryptedAmount(BigUint::from(0xBEEFu32));
        assert_eq!(serde_json::to_string(&c).unwrap(), "\"beef\"");
        assert_eq!(serde_json::from_str::<EncryptedAmount>("\"beef\"").unwrap(), c);
        assert!(serde_json::from_str::<EncryptedAmount>("\"BEEF\"").is_err());
    }

    #[test]
    fn known_moduli_are_safe_primes() {
        assert_eq!(GroupProfile::Test.params().security_bits(), 64);
        assert_eq!(GroupProfile::Real.params().security_bits(), 2048);
        assert!(GroupParams::from_safe_prime(BigUint::from(13u32)).is_err());
        assert!(!is_probable_prime(&BigUint::from(3215031751u64)));
        assert!(is_probable_prime(&BigUint::from(2147483647u64)));
    }

    #[test]
    fn range_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = GroupProfile::Toy.range_policy();
        let seen: std::collections::BTreeSet<(u64, u64)> = (0..200)
            .map(|_| {
                let r = make_range(3, policy.width(3), 1, &mut rng);
                (r.lo as u64, r.hi as u64)
            })
            .collect();
        assert!(seen.contains(&(1, 4)));
        assert!(seen.iter().all(|&(lo, hi)| lo <= 3 && 3 <= hi && hi - lo == 3));
        let r = make_range(3, RangePolicy { width_ratio: 0.0 }.width(3), 1, &mut rng);
        assert_eq!(r, PriceRange::new(3.0, 3.0));
    }

    #[test]
    fn range_offsets_are_uniform() {
        // p = 3, width round(1.5) = 2: offsets {0, 1, 2}
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let width = RangePolicy::default().width(3);
        assert_eq!(width, 2);
        let draws = 10_000;
        let mut counts = [0f64; 3];
        let mut midpoint_hits = 0;
        for _ in 0..draws {
            let r = make_range(3, width, 1, &mut rng);
            counts[(3.0 - r.lo) as usize] += 1.0;
            if r.midpoint() == 3.0 {
                midpoint_hits += 1;
            }
        }
        let expected = draws as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // chi-square, 2 degrees of freedom, alpha = 0.001
        assert!(chi2 < 13.816, "chi2 = {chi2}");
        assert!(midpoint_hits < draws / 2);
    }

    #[test]
    fn minor_bounds_snap_float_noise() {
        let r = PriceRange::new(1.23, 4.56);
        assert_eq!(r.minor_bounds(100), Some((123, 456)));
        assert!(r.contains_minor(456, 100));
        assert!(!r.contains_minor(457, 100));
        assert_eq!(PriceRange::new(2.5, 3.25).minor_bounds(1), Some((3, 3)));
        assert_eq!(PriceRange::new(2.5, 2.75).minor_bounds(1), None);
    }

    #[test]
    fn minor_unit_rounding() {
        assert_eq!(to_minor_units(2.1, 100), 210);
        assert_eq!(to_minor_units(0.125, 100), 13);
        assert_eq!(to_minor_units(2.5, 1), 3);
        assert_eq!(to_minor_units(0.0, 100), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn homomorphism_at_64_bits(seed in any::<u64>(), a in 0i64..i64::MAX, frac in 0.0f64..=1.0) {
            let params = GroupProfile::Test.params();
            let cred = Registrar::default().reg(&params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = (a as f64 * frac) as i64;
            let b = b.min(a);
            let lhs = enc(&cred, &params, a).unwrap().mul(&inv(&enc(&cred, &params, a - b).unwrap(), &params).unwrap(), &params);
            prop_assert_eq!(lhs, enc(&cred, &params, b).unwrap());
        }

        #[test]
        fn inverse_is_an_involution(x in 1u64..u64::MAX) {
            let params = GroupProfile::Test.params();
            let x = e(x % (params.modulus() - 1u32).iter_u64_digits().next().unwrap() + 1);
            prop_assert_eq!(inv(&inv(&x, &params).unwrap(), &params).unwrap(), x);
        }

        #[test]
        fn encryption_is_deterministic(seed in any::<u64>(), a in 0i64..1_000_000) {
            let params = GroupProfile::Test.params();
            let cred = Registrar::default().reg(&params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(enc(&cred, &params, a).unwrap(), enc(&cred, &params, a).unwrap());
        }

        #[test]
        fn ranges_contain_the_price(price in 0u64..1_000_000, ratio in 0.0f64..2.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = RangePolicy { width_ratio: ratio }.width(price);
            let r = make_range(price, w, 100, &mut rng);
            prop_assert!(r.contains_minor(price, 100));
            prop_assert!(r.lo >= 0.0);
        }
    }
}
