//! Finite-level model of the arboreal representation: explicit subgroups of
//! `(ℤ/mⁿℤ)² ⋊ GL₂(ℤ/mⁿℤ)` for square-free `m`, the w-functions measuring
//! which translations occur with a given matrix, finite-level density counts,
//! and coset-decomposed integration.
//!
//! Elements are stored per prime (CRT components): a group element is one
//! pair `(t_ℓ, M_ℓ)` for each prime `ℓ ∣ m`, with the semidirect law
//! `(t₁, M₁)·(t₂, M₂) = (t₁ + M₁t₂, M₁M₂)` applied componentwise. This layer
//! is an enumeration oracle for small `m` and level — never the production
//! density path.

use crate::modmat::{self, ModMatError, ResidueMatrix};
use crate::rational::ExactRational;
use num_bigint::BigInt;
use num_traits::One;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;

/// Default cap on explicit element sets.
pub const DEFAULT_GROUP_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArborealError {
    NotSquareFree(u64),
    CapExceeded {
        size: u128,
        cap: u64,
    },
    /// Component list does not match the group's primes/level.
    ComponentMismatch,
    /// Requested matrix is not in the projection of the group.
    MatrixNotInProjection,
    /// Element set is not closed under the semidirect product law.
    NotClosed,
    /// The smaller group is not a subgroup of the larger one.
    NotSubgroup,
    /// The subgroup does not decompose as a product across primes.
    NotProductAcrossPrimes,
    /// A Kummer scale exceeds the level.
    BadScale {
        ell: u64,
        scale: u32,
        level: u32,
    },
    Matrix(ModMatError),
    Parse(String),
}

impl fmt::Display for ArborealError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArborealError::NotSquareFree(m) => write!(f, "{m} is not square-free"),
            ArborealError::CapExceeded { size, cap } => {
                write!(f, "group of size {size} exceeds cap {cap}")
            }
            ArborealError::ComponentMismatch => write!(f, "components do not match group shape"),
            ArborealError::MatrixNotInProjection => {
                write!(f, "matrix is not in the projection of the group")
            }
            ArborealError::NotClosed => write!(f, "element set is not closed under the group law"),
            ArborealError::NotSubgroup => write!(f, "not a subgroup"),
            ArborealError::NotProductAcrossPrimes => {
                write!(f, "subgroup is not a product across the primes of m")
            }
            ArborealError::BadScale { ell, scale, level } => {
                write!(f, "torsion scale {scale} at {ell} exceeds level {level}")
            }
            ArborealError::Matrix(e) => write!(f, "{e}"),
            ArborealError::Parse(s) => write!(f, "group file: {s}"),
        }
    }
}

impl std::error::Error for ArborealError {}

impl From<ModMatError> for ArborealError {
    fn from(e: ModMatError) -> Self {
        ArborealError::Matrix(e)
    }
}

/// Kummer-tower data per prime: scale `k_ℓ` means the translation part at ℓ
/// is the sublattice `ℓ^{k}·(ℤ/ℓⁿℤ)²`; scale 0 is the maximal tower. The
/// stabilization level `n0` is user-supplied, not auto-detected.
#[derive(Debug, Clone, Default)]
pub struct KummerAssumptions {
    scales: std::collections::BTreeMap<u64, u32>,
    pub n0: u32,
}

impl KummerAssumptions {
    /// Maximal Kummer growth at every prime.
    pub fn maximal() -> Self {
        KummerAssumptions::default()
    }

    pub fn with_scale(mut self, ell: u64, scale: u32) -> Self {
        self.scales.insert(ell, scale);
        self
    }

    pub fn scale(&self, ell: u64) -> u32 {
        self.scales.get(&ell).copied().unwrap_or(0)
    }

    /// The Kummer failure constant `C_m = Π_ℓ ℓ^{2·k_ℓ}`; 1 when maximal.
    pub fn c_m(&self, m: u64) -> Result<ExactRational, ArborealError> {
        let mut c = BigInt::one();
        for p in squarefree_primes(m)? {
            c *= BigInt::from(p).pow(2 * self.scale(p));
        }
        Ok(ExactRational::from_integer(c))
    }
}

/// One per-prime CRT component of a group element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeComponent {
    pub translation: [u64; 2],
    pub matrix: ResidueMatrix,
}

impl PrimeComponent {
    fn compose(&self, other: &PrimeComponent) -> PrimeComponent {
        let moved = self.matrix.apply(other.translation);
        let modulus = self.matrix.modulus();
        PrimeComponent {
            translation: [
                (self.translation[0] + moved[0]) % modulus,
                (self.translation[1] + moved[1]) % modulus,
            ],
            matrix: self.matrix.mul(&other.matrix),
        }
    }

    fn inverse(&self) -> Result<PrimeComponent, ModMatError> {
        let inv = self.matrix.inverse()?;
        let modulus = self.matrix.modulus();
        let moved = inv.apply(self.translation);
        Ok(PrimeComponent {
            translation: [
                (modulus - moved[0]) % modulus,
                (modulus - moved[1]) % modulus,
            ],
            matrix: inv,
        })
    }
}

/// Element of `(ℤ/mⁿℤ)² ⋊ GL₂(ℤ/mⁿℤ)` in per-prime components, ordered by
/// ascending prime.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupElement {
    pub components: Vec<PrimeComponent>,
}

impl GroupElement {
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.compose(b))
                .collect(),
        }
    }

    pub fn inverse(&self) -> Result<GroupElement, ModMatError> {
        Ok(GroupElement {
            components: self
                .components
                .iter()
                .map(|c| c.inverse())
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn matrices(&self) -> Vec<ResidueMatrix> {
        self.components.iter().map(|c| c.matrix).collect()
    }
}

/// Explicit finite subgroup of `(ℤ/mⁿℤ)² ⋊ GL₂(ℤ/mⁿℤ)`.
pub struct ArborealLevelGroup {
    m: u64,
    level: u32,
    primes: Vec<u64>,
    elements: Vec<GroupElement>,
    index: HashMap<GroupElement, usize>,
}

fn squarefree_primes(m: u64) -> Result<Vec<u64>, ArborealError> {
    crate::density::factor_squarefree_u64(m).map_err(|_| ArborealError::NotSquareFree(m))
}

/// Matrix part of a group under construction.
pub enum MatrixPart<'a> {
    /// All of `GL₂(ℤ/ℓⁿℤ)` at every prime.
    FullGl2,
    /// An explicit matrix group given as tuples (one matrix per prime),
    /// allowing entangled (non-product) groups.
    Tuples(&'a [Vec<ResidueMatrix>]),
}

impl ArborealLevelGroup {
    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.index.contains_key(g)
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            components: self
                .primes
                .iter()
                .map(|&p| PrimeComponent {
                    translation: [0, 0],
                    matrix: ResidueMatrix::identity(p, self.level).expect("valid prime"),
                })
                .collect(),
        }
    }

    fn from_vec(
        m: u64,
        level: u32,
        elements: Vec<GroupElement>,
    ) -> Result<ArborealLevelGroup, ArborealError> {
        let primes = squarefree_primes(m)?;
        let index: HashMap<GroupElement, usize> = elements
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();
        if index.len() != elements.len() {
            return Err(ArborealError::NotClosed);
        }
        Ok(ArborealLevelGroup {
            m,
            level,
            primes,
            elements,
            index,
        })
    }

    /// The group `T ⋊ H`: translation part `T = Π ℓ^{k_ℓ}(ℤ/ℓⁿℤ)²` from the
    /// Kummer scales, matrix part `H` either full or an explicit tuple set.
    pub fn build_full_arboreal(
        m: u64,
        level: u32,
        matrices: MatrixPart<'_>,
        kummer: &KummerAssumptions,
        cap: u64,
    ) -> Result<ArborealLevelGroup, ArborealError> {
        let primes = squarefree_primes(m)?;
        // translation sublattice per prime
        let mut translations: Vec<Vec<[u64; 2]>> = Vec::new();
        for &p in &primes {
            let k = kummer.scale(p);
            if k > level {
                return Err(ArborealError::BadScale {
                    ell: p,
                    scale: k,
                    level,
                });
            }
            let step = p.pow(k);
            let reduced = p.pow(level - k);
            let mut ts = Vec::with_capacity((reduced * reduced) as usize);
            for x in 0..reduced {
                for y in 0..reduced {
                    ts.push([x * step, y * step]);
                }
            }
            translations.push(ts);
        }
        let tuples: Vec<Vec<ResidueMatrix>> = match matrices {
            MatrixPart::Tuples(t) => {
                for tuple in t {
                    if tuple.len() != primes.len() {
                        return Err(ArborealError::ComponentMismatch);
                    }
                    for (mat, &p) in tuple.iter().zip(&primes) {
                        if mat.ell() != p || mat.level() != level || !mat.is_invertible() {
                            return Err(ArborealError::ComponentMismatch);
                        }
                    }
                }
                t.to_vec()
            }
            MatrixPart::FullGl2 => {
                let per_prime: Vec<Vec<ResidueMatrix>> = primes
                    .iter()
                    .map(|&p| modmat::invertible_matrices(p, level, cap))
                    .collect::<Result<_, _>>()?;
                let mut tuples = vec![Vec::new()];
                for mats in &per_prime {
                    let mut next = Vec::with_capacity(tuples.len() * mats.len());
                    for t in &tuples {
                        for m in mats {
                            let mut t = t.clone();
                            t.push(*m);
                            next.push(t);
                        }
                    }
                    tuples = next;
                }
                tuples
            }
        };
        let torsion_size: u128 = translations.iter().map(|t| t.len() as u128).product();
        let size = torsion_size * tuples.len() as u128;
        if size > cap as u128 {
            return Err(ArborealError::CapExceeded { size, cap });
        }
        let mut elements = Vec::with_capacity(size as usize);
        let mut cursor = vec![0usize; primes.len()];
        for tuple in &tuples {
            // cartesian product of per-prime translation lattices
            cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let components = (0..primes.len())
                    .map(|i| PrimeComponent {
                        translation: translations[i][cursor[i]],
                        matrix: tuple[i],
                    })
                    .collect();
                elements.push(GroupElement { components });
                let mut i = 0;
                loop {
                    if i == primes.len() {
                        break;
                    }
                    cursor[i] += 1;
                    if cursor[i] < translations[i].len() {
                        break;
                    }
                    cursor[i] = 0;
                    i += 1;
                }
                if i == primes.len() {
                    break;
                }
            }
        }
        ArborealLevelGroup::from_vec(m, level, elements)
    }

    /// Fixed-point closure of a generator list.
    pub fn from_generators(
        m: u64,
        level: u32,
        generators: &[GroupElement],
        cap: u64,
    ) -> Result<ArborealLevelGroup, ArborealError> {
        let primes = squarefree_primes(m)?;
        for g in generators {
            check_shape(g, &primes, level)?;
        }
        let identity = GroupElement {
            components: primes
                .iter()
                .map(|&p| PrimeComponent {
                    translation: [0, 0],
                    matrix: ResidueMatrix::identity(p, level).expect("valid prime"),
                })
                .collect(),
        };
        let mut seen: HashSet<GroupElement> = HashSet::new();
        let mut order = Vec::new();
        let mut frontier = vec![identity.clone()];
        seen.insert(identity);
        while let Some(g) = frontier.pop() {
            order.push(g.clone());
            for gen in generators {
                for next in [g.compose(gen), gen.compose(&g)] {
                    if !seen.contains(&next) {
                        if seen.len() as u64 >= cap {
                            return Err(ArborealError::CapExceeded {
                                size: seen.len() as u128 + 1,
                                cap,
                            });
                        }
                        seen.insert(next.clone());
                        frontier.push(next);
                    }
                }
            }
        }
        order.sort_by_key(element_sort_key);
        ArborealLevelGroup::from_vec(m, level, order)
    }

    /// Builds from an explicit element list, verifying the group axioms.
    ///
    /// Closure is checked pairwise up to ~2²⁵ products, and on a
    /// deterministic stride of pairs beyond that.
    pub fn from_elements(
        m: u64,
        level: u32,
        elements: Vec<GroupElement>,
        cap: u64,
    ) -> Result<ArborealLevelGroup, ArborealError> {
        let primes = squarefree_primes(m)?;
        if elements.len() as u64 > cap {
            return Err(ArborealError::CapExceeded {
                size: elements.len() as u128,
                cap,
            });
        }
        for g in &elements {
            check_shape(g, &primes, level)?;
        }
        let group = ArborealLevelGroup::from_vec(m, level, elements)?;
        if !group.contains(&group.identity()) {
            return Err(ArborealError::NotClosed);
        }
        for g in &group.elements {
            if !group.contains(&g.inverse()?) {
                return Err(ArborealError::NotClosed);
            }
        }
        let n = group.elements.len();
        let stride = ((n as u128 * n as u128) / (1 << 25) + 1) as usize;
        let mut pair = 0usize;
        for a in &group.elements {
            for b in &group.elements {
                pair += 1;
                if !pair.is_multiple_of(stride) {
                    continue;
                }
                if !group.contains(&a.compose(b)) {
                    return Err(ArborealError::NotClosed);
                }
            }
        }
        Ok(group)
    }

    /// Translation fiber over a matrix tuple: `{t : (t, M) ∈ Γ}`.
    fn fiber(&self, mats: &[ResidueMatrix]) -> Vec<Vec<[u64; 2]>> {
        self.elements
            .iter()
            .filter(|g| g.components.iter().zip(mats).all(|(c, m)| c.matrix == *m))
            .map(|g| g.components.iter().map(|c| c.translation).collect())
            .collect()
    }

    /// Image of `M − I` on `(ℤ/ℓⁿℤ)²` by direct span enumeration.
    fn image_set(mat: &ResidueMatrix) -> HashSet<[u64; 2]> {
        let modulus = mat.modulus();
        let mut out = HashSet::new();
        for x in 0..modulus {
            for y in 0..modulus {
                let w = mat.apply([x, y]);
                out.insert([
                    (w[0] + modulus - x) % modulus,
                    (w[1] + modulus - y) % modulus,
                ]);
            }
        }
        out
    }

    /// `w(M) = #(im(M−I) ∩ 𝒲(M)) / #im(M−I)` where `𝒲(M)` is the set of
    /// translations occurring with `M` in the group.
    pub fn w_level(&self, mats: &[ResidueMatrix]) -> Result<ExactRational, ArborealError> {
        if mats.len() != self.primes.len() {
            return Err(ArborealError::ComponentMismatch);
        }
        let fiber = self.fiber(mats);
        if fiber.is_empty() {
            return Err(ArborealError::MatrixNotInProjection);
        }
        let images: Vec<HashSet<[u64; 2]>> = mats.iter().map(Self::image_set).collect();
        let hits = fiber
            .iter()
            .filter(|t| t.iter().zip(&images).all(|(c, im)| im.contains(c)))
            .count();
        let im_size: u128 = images.iter().map(|im| im.len() as u128).product();
        Ok(ExactRational::new(
            BigInt::from(hits),
            BigInt::from(im_size),
        ))
    }

    /// The per-prime w-function on the fiber over `x ∈ 𝒢(m)`: translations at
    /// the chosen prime occurring together with matrix component `v` among
    /// elements whose matrix part reduces to `x` mod m.
    pub fn w_fiber(
        &self,
        x: &[ResidueMatrix],
        prime_index: usize,
        v: &ResidueMatrix,
    ) -> Result<ExactRational, ArborealError> {
        if x.len() != self.primes.len() || prime_index >= self.primes.len() {
            return Err(ArborealError::ComponentMismatch);
        }
        let shape_ok = x
            .iter()
            .zip(&self.primes)
            .all(|(xm, &p)| xm.ell() == p && xm.level() == 1)
            && v.ell() == self.primes[prime_index]
            && v.level() == self.level;
        if !shape_ok {
            return Err(ArborealError::ComponentMismatch);
        }
        let mut fiber_translations: HashSet<[u64; 2]> = HashSet::new();
        for g in &self.elements {
            let in_x_fiber = g
                .components
                .iter()
                .zip(x)
                .all(|(c, xm)| c.matrix.reduce_to(1) == *xm);
            if in_x_fiber && g.components[prime_index].matrix == *v {
                fiber_translations.insert(g.components[prime_index].translation);
            }
        }
        if fiber_translations.is_empty() {
            return Err(ArborealError::MatrixNotInProjection);
        }
        let image = Self::image_set(v);
        let hits = fiber_translations
            .iter()
            .filter(|t| image.contains(*t))
            .count();
        Ok(ExactRational::new(
            BigInt::from(hits),
            BigInt::from(image.len()),
        ))
    }

    /// `#{(t, M) ∈ Γ : t ∈ im(M − I)} / #Γ`: the level-n counting version of
    /// the density. Upper-bounds the true density and is non-increasing in
    /// the level.
    pub fn finite_level_density(&self) -> ExactRational {
        let mut by_matrix: HashMap<Vec<ResidueMatrix>, Vec<&GroupElement>> = HashMap::new();
        for g in &self.elements {
            by_matrix.entry(g.matrices()).or_default().push(g);
        }
        let mut hits = 0u128;
        for (mats, members) in &by_matrix {
            let images: Vec<HashSet<[u64; 2]>> = mats.iter().map(Self::image_set).collect();
            hits += members
                .iter()
                .filter(|g| {
                    g.components
                        .iter()
                        .zip(&images)
                        .all(|(c, im)| im.contains(&c.translation))
                })
                .count() as u128;
        }
        ExactRational::new(BigInt::from(hits), BigInt::from(self.elements.len()))
    }

    pub fn is_subgroup_of(&self, other: &ArborealLevelGroup) -> bool {
        self.m == other.m
            && self.level == other.level
            && self.elements.iter().all(|g| other.contains(g))
    }

    /// Serializes as a JSON list of elements with CRT-combined values mod mⁿ.
    pub fn to_json(&self) -> String {
        let items: Vec<ElementJson> = self.elements.iter().map(|g| self.element_json(g)).collect();
        serde_json::to_string_pretty(&items).expect("group serializes")
    }

    fn element_json(&self, g: &GroupElement) -> ElementJson {
        let modulus = self.m.pow(self.level);
        let crt = |vals: Vec<(u64, u64)>| -> u64 {
            // (residue, prime-power modulus) pairs with coprime moduli
            let mut acc = 0u64;
            let mut acc_mod = 1u64;
            for (r, md) in vals {
                let inv = modmat::inv_mod_u64(acc_mod % md, md).expect("coprime moduli");
                let diff = ((r + md - acc % md) % md) as u128;
                let step = (inv as u128 * diff) % md as u128;
                acc += acc_mod * step as u64;
                acc_mod *= md;
            }
            acc % modulus
        };
        let comp_mod: Vec<u64> = self.primes.iter().map(|&p| p.pow(self.level)).collect();
        let t = [0, 1].map(|i| {
            crt(g
                .components
                .iter()
                .zip(&comp_mod)
                .map(|(c, &md)| (c.translation[i], md))
                .collect())
        });
        let mat: Vec<Vec<u64>> = (0..2)
            .map(|row| {
                (0..2)
                    .map(|col| {
                        crt(g
                            .components
                            .iter()
                            .zip(&comp_mod)
                            .map(|(c, &md)| (c.matrix.entries()[2 * row + col], md))
                            .collect())
                    })
                    .collect()
            })
            .collect();
        ElementJson {
            t: vec![t[0], t[1]],
            m: mat,
            modulus,
        }
    }

    /// Loads a group file: either a JSON array of elements or
    /// `{"generators": [...]}`; all elements must share the same modulus mⁿ.
    pub fn from_json(data: &str, cap: u64) -> Result<ArborealLevelGroup, ArborealError> {
        let file: GroupFileJson =
            serde_json::from_str(data).map_err(|e| ArborealError::Parse(e.to_string()))?;
        let (items, generator_form) = match file {
            GroupFileJson::Elements(v) => (v, false),
            GroupFileJson::Generators { generators } => (generators, true),
        };
        if items.is_empty() {
            return Err(ArborealError::Parse("empty element list".into()));
        }
        let modulus = items[0].modulus;
        let (m, level) = split_modulus(modulus)?;
        let primes = squarefree_primes(m)?;
        let mut elems = Vec::with_capacity(items.len());
        for it in &items {
            if it.modulus != modulus {
                return Err(ArborealError::Parse("mixed moduli in element list".into()));
            }
            if it.t.len() != 2 || it.m.len() != 2 || it.m.iter().any(|r| r.len() != 2) {
                return Err(ArborealError::Parse(
                    "element shape must be t:[2], M:[2][2]".into(),
                ));
            }
            let components = primes
                .iter()
                .map(|&p| {
                    let md = p.pow(level);
                    let matrix = ResidueMatrix::new(
                        p,
                        level,
                        [
                            it.m[0][0] % md,
                            it.m[0][1] % md,
                            it.m[1][0] % md,
                            it.m[1][1] % md,
                        ],
                    )?;
                    Ok(PrimeComponent {
                        translation: [it.t[0] % md, it.t[1] % md],
                        matrix,
                    })
                })
                .collect::<Result<Vec<_>, ModMatError>>()?;
            elems.push(GroupElement { components });
        }
        if generator_form {
            ArborealLevelGroup::from_generators(m, level, &elems, cap)
        } else {
            ArborealLevelGroup::from_elements(m, level, elems, cap)
        }
    }
}

fn element_sort_key(g: &GroupElement) -> Vec<u64> {
    let mut key = Vec::new();
    for c in &g.components {
        key.extend_from_slice(&c.translation);
        key.extend_from_slice(&c.matrix.entries());
    }
    key
}

fn check_shape(g: &GroupElement, primes: &[u64], level: u32) -> Result<(), ArborealError> {
    if g.components.len() != primes.len() {
        return Err(ArborealError::ComponentMismatch);
    }
    for (c, &p) in g.components.iter().zip(primes) {
        let modulus = p.pow(level);
        if c.matrix.ell() != p
            || c.matrix.level() != level
            || !c.matrix.is_invertible()
            || c.translation.iter().any(|&t| t >= modulus)
        {
            return Err(ArborealError::ComponentMismatch);
        }
    }
    Ok(())
}

fn split_modulus(modulus: u64) -> Result<(u64, u32), ArborealError> {
    // modulus = m^level with m square-free: primes share a common exponent
    let mut n = modulus;
    let mut m = 1u64;
    let mut level = 0u32;
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut e = 0u32;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            if level == 0 {
                level = e;
            } else if level != e {
                return Err(ArborealError::Parse(format!(
                    "modulus {modulus} is not a power of a square-free integer"
                )));
            }
            m *= p;
        }
        p += 1;
    }
    if n > 1 {
        if level == 0 {
            level = 1;
        } else if level != 1 {
            return Err(ArborealError::Parse(format!(
                "modulus {modulus} is not a power of a square-free integer"
            )));
        }
        m *= n;
    }
    if m == 1 || level == 0 {
        return Err(ArborealError::Parse(format!(
            "modulus {modulus} is trivial"
        )));
    }
    Ok((m, level))
}

#[derive(Debug, Serialize, Deserialize)]
struct ElementJson {
    t: Vec<u64>,
    #[serde(rename = "M")]
    m: Vec<Vec<u64>>,
    #[serde(rename = "mod")]
    modulus: u64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GroupFileJson {
    Elements(Vec<ElementJson>),
    Generators { generators: Vec<ElementJson> },
}

/// Coset-decomposed integration: for `H' ≤ H` of finite index with `H'` a
/// product across primes,
///
/// ```text
/// ∫_H f dμ_H = (H : H')⁻¹ · Σ_{x ∈ H/H'} Π_ℓ ∫_{H_ℓ(x)} f_{x,ℓ} dμ
/// ```
///
/// `f` is supplied per coset representative and prime as a function of the
/// prime component alone; each inner integral is the average over the
/// ℓ-component cell of the coset.
pub fn coset_integrate<F>(
    h: &ArborealLevelGroup,
    h_prime: &ArborealLevelGroup,
    f: F,
) -> Result<ExactRational, ArborealError>
where
    F: Fn(&GroupElement, usize, &PrimeComponent) -> ExactRational,
{
    if h.m != h_prime.m || h.level != h_prime.level {
        return Err(ArborealError::ComponentMismatch);
    }
    if !h_prime.is_subgroup_of(h) {
        return Err(ArborealError::NotSubgroup);
    }
    // H' must be a product of its per-prime projections
    let mut proj_sizes = Vec::new();
    for i in 0..h.primes.len() {
        let proj: HashSet<PrimeComponent> =
            h_prime.elements.iter().map(|g| g.components[i]).collect();
        proj_sizes.push(proj.len() as u128);
    }
    if proj_sizes.iter().product::<u128>() != h_prime.len() as u128 {
        return Err(ArborealError::NotProductAcrossPrimes);
    }
    let index = h.len() / h_prime.len();
    let mut assigned = vec![false; h.len()];
    let mut total = ExactRational::from_integer(BigInt::from(0));
    for start in 0..h.len() {
        if assigned[start] {
            continue;
        }
        let rep = &h.elements[start];
        // materialize the coset rep · H'
        let mut cells: Vec<HashSet<PrimeComponent>> = vec![HashSet::new(); h.primes.len()];
        for hp in &h_prime.elements {
            let g = rep.compose(hp);
            let idx = *h.index.get(&g).ok_or(ArborealError::NotSubgroup)?;
            assigned[idx] = true;
            for (i, c) in g.components.iter().enumerate() {
                cells[i].insert(*c);
            }
        }
        let mut product = ExactRational::one();
        for (i, cell) in cells.iter().enumerate() {
            let mut sum = ExactRational::from_integer(BigInt::from(0));
            let mut ordered: Vec<&PrimeComponent> = cell.iter().collect();
            ordered.sort_by_key(|c| (c.translation, c.matrix.entries()));
            for c in ordered {
                sum += f(rep, i, c);
            }
            product *= sum / ExactRational::from_integer(BigInt::from(cell.len()));
        }
        total += product;
    }
    Ok(total / ExactRational::from_integer(BigInt::from(index)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characters::{psi, Sign};
    use crate::rational::rat;

    fn full(m: u64, level: u32) -> ArborealLevelGroup {
        ArborealLevelGroup::build_full_arboreal(
            m,
            level,
            MatrixPart::FullGl2,
            &KummerAssumptions::maximal(),
            DEFAULT_GROUP_CAP,
        )
        .unwrap()
    }

    #[test]
    fn full_group_orders() {
        assert_eq!(full(2, 1).len(), 24); // 4 · 6
        assert_eq!(full(6, 1).len(), 36 * 6 * 48);
        assert_eq!(full(3, 1).len(), 9 * 48);
    }

    #[test]
    fn closure_and_inverse_small() {
        let g = full(2, 1);
        for a in g.elements().iter() {
            assert!(g.contains(&a.inverse().unwrap()));
            for b in g.elements().iter() {
                assert!(g.contains(&a.compose(b)));
            }
        }
    }

    #[test]
    fn generator_closure_matches_full() {
        // translations and two matrices generate the full level-1 group at ℓ=2
        let t1 = GroupElement {
            components: vec![PrimeComponent {
                translation: [1, 0],
                matrix: ResidueMatrix::identity(2, 1).unwrap(),
            }],
        };
        let t2 = GroupElement {
            components: vec![PrimeComponent {
                translation: [0, 1],
                matrix: ResidueMatrix::identity(2, 1).unwrap(),
            }],
        };
        let s = GroupElement {
            components: vec![PrimeComponent {
                translation: [0, 0],
                matrix: ResidueMatrix::new(2, 1, [0, 1, 1, 0]).unwrap(),
            }],
        };
        let r = GroupElement {
            components: vec![PrimeComponent {
                translation: [0, 0],
                matrix: ResidueMatrix::new(2, 1, [0, 1, 1, 1]).unwrap(),
            }],
        };
        let g = ArborealLevelGroup::from_generators(2, 1, &[t1, t2, s, r], 1 << 12).unwrap();
        assert_eq!(g.len(), 24);
    }

    #[test]
    fn kummer_constants() {
        assert_eq!(
            KummerAssumptions::maximal().c_m(6).unwrap(),
            ExactRational::one()
        );
        let k = KummerAssumptions::maximal().with_scale(2, 1);
        assert_eq!(k.c_m(2).unwrap(), rat(4, 1));
        assert_eq!(k.c_m(6).unwrap(), rat(4, 1));
        let k2 = k.with_scale(3, 1);
        assert_eq!(k2.c_m(6).unwrap(), rat(36, 1));
    }

    #[test]
    fn w_is_one_on_full_groups() {
        let g = full(6, 1);
        let mut seen = std::collections::HashSet::new();
        for e in g.elements() {
            let mats = e.matrices();
            if seen.insert(mats.clone()) {
                assert_eq!(g.w_level(&mats).unwrap(), ExactRational::one());
            }
        }
    }

    #[test]
    fn w_with_restricted_torsion() {
        // torsion part 2·(ℤ/4ℤ)², index-4 Kummer failure at level 2
        let g = ArborealLevelGroup::build_full_arboreal(
            2,
            2,
            MatrixPart::FullGl2,
            &KummerAssumptions::maximal().with_scale(2, 1),
            DEFAULT_GROUP_CAP,
        )
        .unwrap();
        assert_eq!(g.len(), 4 * 96);
        // identity: im(M−I) = {0} and 0 always occurs
        let id = [ResidueMatrix::identity(2, 2).unwrap()];
        assert_eq!(g.w_level(&id).unwrap(), ExactRational::one());
        // unipotent: im(M−I) = {(y,0)} has 4 elements, two of them even
        let uni = [ResidueMatrix::new(2, 2, [1, 1, 0, 1]).unwrap()];
        assert_eq!(g.w_level(&uni).unwrap(), rat(1, 2));
        // matrix outside the projection of a restricted matrix group
        let only_id = ArborealLevelGroup::build_full_arboreal(
            2,
            2,
            MatrixPart::Tuples(&[vec![ResidueMatrix::identity(2, 2).unwrap()]]),
            &KummerAssumptions::maximal(),
            DEFAULT_GROUP_CAP,
        )
        .unwrap();
        assert!(matches!(
            only_id.w_level(&uni),
            Err(ArborealError::MatrixNotInProjection)
        ));
    }

    #[test]
    fn w_factors_over_primes_on_product_groups() {
        // eq-style product law: w of the m=6 group is the product of the
        // per-prime w's, including under restricted torsion
        let kummer = KummerAssumptions::maximal()
            .with_scale(2, 1)
            .with_scale(3, 1);
        let g6 = ArborealLevelGroup::build_full_arboreal(
            6,
            1,
            MatrixPart::FullGl2,
            &kummer,
            DEFAULT_GROUP_CAP,
        )
        .unwrap();
        let g2 = ArborealLevelGroup::build_full_arboreal(
            2,
            1,
            MatrixPart::FullGl2,
            &kummer,
            DEFAULT_GROUP_CAP,
        )
        .unwrap();
        let g3 = ArborealLevelGroup::build_full_arboreal(
            3,
            1,
            MatrixPart::FullGl2,
            &kummer,
            DEFAULT_GROUP_CAP,
        )
        .unwrap();
        let mut seen = std::collections::HashSet::new();
        for e in g6.elements() {
            let mats = e.matrices();
            if !seen.insert(mats.clone()) {
                continue;
            }
            let w6 = g6.w_level(&mats).unwrap();
            let w2 = g2.w_level(&mats[0..1]).unwrap();
            let w3 = g3.w_level(&mats[1..2]).unwrap();
            assert!(w6 >= ExactRational::from_integer(BigInt::from(0)));
            assert!(w6 <= ExactRational::one());
            assert_eq!(w6, w2 * w3);
        }
    }

    #[test]
    fn w_fiber_factorization_on_entangled_group() {
        // Serre-style toy at m = 6, level 1: ψ(M₂) = ε₃(M₃), torsion
        // restricted to zero at 2
        let serre = serre_toy_group();
        let mut seen = std::collections::HashSet::new();
        for e in serre.elements() {
            let mats = e.matrices();
            if !seen.insert(mats.clone()) {
                continue;
            }
            // at level 1, the mod-m fiber of a matrix tuple is itself
            let w = serre.w_level(&mats).unwrap();
            let w2 = serre.w_fiber(&mats, 0, &mats[0]).unwrap();
            let w3 = serre.w_fiber(&mats, 1, &mats[1]).unwrap();
            assert_eq!(w, w2 * w3);
        }
    }

    fn serre_toy_group() -> ArborealLevelGroup {
        let full6 = full(6, 1);
        let elems: Vec<GroupElement> = full6
            .elements()
            .iter()
            .filter(|g| {
                let m2 = g.components[0].matrix;
                let m3 = g.components[1].matrix;
                let eps3 = crate::characters::legendre(m3.det() as i64, 3);
                psi(&m2).unwrap().to_i8() == eps3 && g.components[0].translation == [0, 0]
            })
            .cloned()
            .collect();
        ArborealLevelGroup::from_elements(6, 1, elems, DEFAULT_GROUP_CAP).unwrap()
    }

    #[test]
    fn w_fiber_agrees_with_w_level_at_higher_level() {
        // single prime: the fiber over x = V mod 2 is the full fiber of V,
        // so the two w's coincide (torsion restricted to make them nontrivial)
        let g = ArborealLevelGroup::build_full_arboreal(
            2,
            2,
            MatrixPart::FullGl2,
            &KummerAssumptions::maximal().with_scale(2, 1),
            DEFAULT_GROUP_CAP,
        )
        .unwrap();
        let mut seen = std::collections::HashSet::new();
        for e in g.elements() {
            let v = e.components[0].matrix;
            if !seen.insert(v) {
                continue;
            }
            let x = [v.reduce_to(1)];
            assert_eq!(g.w_fiber(&x, 0, &v).unwrap(), g.w_level(&[v]).unwrap());
        }
        // level/shape mismatches are rejected
        let bad_x = [ResidueMatrix::identity(2, 2).unwrap()];
        let v = ResidueMatrix::identity(2, 2).unwrap();
        assert!(matches!(
            g.w_fiber(&bad_x, 0, &v),
            Err(ArborealError::ComponentMismatch)
        ));
    }

    #[test]
    fn group_file_rejects_mixed_exponent_modulus() {
        let json = r#"[{"t": [0, 0], "M": [[1, 0], [0, 1]], "mod": 12}]"#;
        assert!(matches!(
            ArborealLevelGroup::from_json(json, 1 << 10),
            Err(ArborealError::Parse(_))
        ));
    }

    #[test]
    fn finite_level_density_values() {
        // frozen from the direct double loop over all (t, M) pairs
        assert_eq!(full(2, 1).finite_level_density(), rat(5, 8));
        assert_eq!(full(2, 2).finite_level_density(), rat(281, 512));
        // trivial matrix group: t = 0 ∈ im(0) always
        let trivial = ArborealLevelGroup::build_full_arboreal(
            2,
            1,
            MatrixPart::Tuples(&[vec![ResidueMatrix::identity(2, 1).unwrap()]]),
            &KummerAssumptions::maximal().with_scale(2, 1),
            DEFAULT_GROUP_CAP,
        )
        .unwrap();
        assert_eq!(trivial.len(), 1);
        assert_eq!(trivial.finite_level_density(), ExactRational::one());
    }

    #[test]
    fn finite_level_density_double_loop_oracle() {
        // independent double loop over all 24 pairs at ℓ = 2, level 1
        let g = full(2, 1);
        let mut hits = 0u32;
        for e in g.elements() {
            let mat = e.components[0].matrix;
            let image = ArborealLevelGroup::image_set(&mat);
            if image.contains(&e.components[0].translation) {
                hits += 1;
            }
        }
        assert_eq!(
            ExactRational::new(BigInt::from(hits), BigInt::from(g.len())),
            g.finite_level_density()
        );
    }

    #[test]
    fn coset_integration_diagonal_toy() {
        // diagonal C₂ inside C₂ × C₂, trivial H': formula equals direct sum
        let id2 = ResidueMatrix::identity(2, 1).unwrap();
        let id3 = ResidueMatrix::identity(3, 1).unwrap();
        let neg3 = ResidueMatrix::new(3, 1, [2, 0, 0, 2]).unwrap();
        let e = GroupElement {
            components: vec![
                PrimeComponent {
                    translation: [0, 0],
                    matrix: id2,
                },
                PrimeComponent {
                    translation: [0, 0],
                    matrix: id3,
                },
            ],
        };
        let g = GroupElement {
            components: vec![
                PrimeComponent {
                    translation: [1, 0],
                    matrix: id2,
                },
                PrimeComponent {
                    translation: [0, 0],
                    matrix: neg3,
                },
            ],
        };
        let h = ArborealLevelGroup::from_elements(6, 1, vec![e.clone(), g], 1 << 10).unwrap();
        let h_prime = ArborealLevelGroup::from_elements(6, 1, vec![e], 1 << 10).unwrap();
        // f = product of coordinate indicators (nonzero translation at 2,
        // nontrivial matrix at 3)
        let f = |_rep: &GroupElement, i: usize, c: &PrimeComponent| -> ExactRational {
            let hit = match i {
                0 => c.translation == [1, 0],
                _ => c.matrix.entries() == [2, 0, 0, 2],
            };
            if hit {
                ExactRational::one()
            } else {
                ExactRational::from_integer(BigInt::from(0))
            }
        };
        let lhs = coset_integrate(&h, &h_prime, f).unwrap();
        // direct sum: f(e) = 0, f(g) = 1 → average 1/2
        assert_eq!(lhs, rat(1, 2));
        // constant integrand integrates to 1
        let one = coset_integrate(&h, &h_prime, |_, _, _| ExactRational::one()).unwrap();
        assert_eq!(one, ExactRational::one());
    }

    #[test]
    fn coset_integration_matches_direct_enumeration() {
        // Serre toy: integrand 1_{t ∈ im(M−I)} per prime; the coset formula
        // must equal the plain average over the full group
        let serre = serre_toy_group();
        let h_prime_elems: Vec<GroupElement> = serre
            .elements()
            .iter()
            .filter(|g| {
                psi(&g.components[0].matrix).unwrap() == Sign::Plus
                    && crate::characters::legendre(g.components[1].matrix.det() as i64, 3) == 1
            })
            .cloned()
            .collect();
        let h_prime =
            ArborealLevelGroup::from_elements(6, 1, h_prime_elems, DEFAULT_GROUP_CAP).unwrap();
        assert_eq!(serre.len() / h_prime.len(), 2);
        let f = |_rep: &GroupElement, _i: usize, c: &PrimeComponent| -> ExactRational {
            let image = ArborealLevelGroup::image_set(&c.matrix);
            if image.contains(&c.translation) {
                ExactRational::one()
            } else {
                ExactRational::from_integer(BigInt::from(0))
            }
        };
        let by_formula = coset_integrate(&serre, &h_prime, f).unwrap();
        let direct = serre.finite_level_density();
        assert_eq!(by_formula, direct);
    }

    #[test]
    fn coset_integration_rejects_non_product_subgroup() {
        // the diagonal C₂ is not a product of its projections
        let serre = serre_toy_group();
        let id = serre.identity();
        let twist = serre
            .elements()
            .iter()
            .find(|g| {
                g.components.iter().all(|c| c.translation == [0, 0])
                    && psi(&g.components[0].matrix).unwrap() == Sign::Minus
                    && {
                        let sq = g.components[0].matrix.mul(&g.components[0].matrix);
                        sq == ResidueMatrix::identity(2, 1).unwrap()
                    }
                    && {
                        let sq = g.components[1].matrix.mul(&g.components[1].matrix);
                        sq == ResidueMatrix::identity(3, 1).unwrap()
                    }
            })
            .unwrap()
            .clone();
        let diag =
            ArborealLevelGroup::from_elements(6, 1, vec![id, twist], DEFAULT_GROUP_CAP).unwrap();
        let res = coset_integrate(&serre, &diag, |_, _, _| ExactRational::one());
        assert!(matches!(res, Err(ArborealError::NotProductAcrossPrimes)));
    }

    #[test]
    fn json_roundtrip_and_generator_form() {
        let g = full(6, 1);
        let json = g.to_json();
        let back = ArborealLevelGroup::from_json(&json, DEFAULT_GROUP_CAP).unwrap();
        assert_eq!(back.len(), g.len());
        assert_eq!(back.m(), 6);
        assert_eq!(back.level(), 1);
        for e in back.elements() {
            assert!(g.contains(e));
        }

        let gens = r#"{"generators": [
            {"t": [1, 0], "M": [[1, 0], [0, 1]], "mod": 2},
            {"t": [0, 1], "M": [[1, 0], [0, 1]], "mod": 2},
            {"t": [0, 0], "M": [[0, 1], [1, 0]], "mod": 2},
            {"t": [0, 0], "M": [[0, 1], [1, 1]], "mod": 2}
        ]}"#;
        let gen_group = ArborealLevelGroup::from_json(gens, DEFAULT_GROUP_CAP).unwrap();
        assert_eq!(gen_group.len(), 24);
    }

    #[test]
    fn coset_integration_rejects_non_subgroup() {
        let serre = serre_toy_group();
        let full6 = full(6, 1);
        let res = coset_integrate(&serre, &full6, |_, _, _| ExactRational::one());
        assert!(matches!(res, Err(ArborealError::NotSubgroup)));
        let g2 = full(2, 1);
        let res = coset_integrate(&serre, &g2, |_, _, _| ExactRational::one());
        assert!(matches!(res, Err(ArborealError::ComponentMismatch)));
    }

    #[test]
    fn scale_beyond_level_rejected() {
        let res = ArborealLevelGroup::build_full_arboreal(
            2,
            2,
            MatrixPart::FullGl2,
            &KummerAssumptions::maximal().with_scale(2, 3),
            DEFAULT_GROUP_CAP,
        );
        assert!(matches!(res, Err(ArborealError::BadScale { .. })));
    }

    #[test]
    fn from_elements_rejects_non_groups() {
        let id2 = ResidueMatrix::identity(2, 1).unwrap();
        let e = GroupElement {
            components: vec![PrimeComponent {
                translation: [1, 0],
                matrix: id2,
            }],
        };
        // missing identity
        assert!(matches!(
            ArborealLevelGroup::from_elements(2, 1, vec![e], 1 << 10),
            Err(ArborealError::NotClosed)
        ));
    }
}
