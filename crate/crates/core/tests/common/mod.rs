//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls the code path it checks: the weighted mean is recomputed
//! in 256-bit fixed point with a series logarithm, relational operations are
//! nested loops over vectors, and the lexical measure uses its own DP.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use ctxalign::model::{build_ontology, DescriptorKind, Ontology, RawDescriptor, RawEntity, RawProperty};

pub mod fixed {
    use super::*;

    /// Fraction bits of the fixed-point representation.
    pub const FRAC: u32 = 256;

    #[derive(Clone, Debug)]
    pub struct Fixed(pub BigInt);

    impl Fixed {
        pub fn one() -> Self {
            Fixed(BigInt::one() << FRAC)
        }

        pub fn from_u64(n: u64) -> Self {
            Fixed(BigInt::from(n) << FRAC)
        }

        /// Exact conversion of a finite nonnegative double.
        pub fn from_f64(x: f64) -> Self {
            assert!(x.is_finite() && x >= 0.0);
            if x == 0.0 {
                return Fixed(BigInt::zero());
            }
            let bits = x.to_bits();
            let exp = ((bits >> 52) & 0x7ff) as i64;
            let frac = bits & ((1u64 << 52) - 1);
            let (mantissa, e) = if exp == 0 {
                (frac, -1074)
            } else {
                (frac | (1u64 << 52), exp - 1075)
            };
            let shift = FRAC as i64 + e;
            let m = BigInt::from(mantissa);
            Fixed(if shift >= 0 {
                m << shift as u32
            } else {
                m >> (-shift) as u32
            })
        }

        pub fn add(&self, o: &Fixed) -> Fixed {
            Fixed(&self.0 + &o.0)
        }

        pub fn sub(&self, o: &Fixed) -> Fixed {
            Fixed(&self.0 - &o.0)
        }

        pub fn mul(&self, o: &Fixed) -> Fixed {
            Fixed((&self.0 * &o.0) >> FRAC)
        }

        pub fn div(&self, o: &Fixed) -> Fixed {
            Fixed((&self.0 << FRAC) / &o.0)
        }

        pub fn is_zero(&self) -> bool {
            self.0.is_zero()
        }

        pub fn to_f64(&self) -> f64 {
            // Keep 64 significant bits before the final rounding to f64.
            let bits = self.0.bits() as i64;
            let drop = (bits - 64).max(0);
            let top = (&self.0 >> drop as u32).to_f64().unwrap();
            top * 2f64.powi((drop - FRAC as i64) as i32)
        }
    }

    /// atanh(z) for 0 <= z < 1/2 by its odd power series.
    fn atanh(z: &Fixed) -> Fixed {
        let z2 = z.mul(z);
        let mut power = z.clone();
        let mut sum = Fixed(BigInt::zero());
        let mut n = 1u64;
        while !power.is_zero() {
            sum = sum.add(&Fixed(&power.0 / BigInt::from(n)));
            power = power.mul(&z2);
            n += 2;
        }
        sum
    }

    pub fn ln2() -> Fixed {
        let third = Fixed::one().div(&Fixed::from_u64(3));
        let a = atanh(&third);
        a.add(&a)
    }

    /// Natural log of x >= 1.
    pub fn ln(x: &Fixed) -> Fixed {
        assert!(x.0 >= Fixed::one().0);
        let mut k = 0u32;
        let mut m = x.clone();
        let two = Fixed::from_u64(2);
        while m.0 >= two.0 {
            m = Fixed(m.0 >> 1u32);
            k += 1;
        }
        let one = Fixed::one();
        let z = m.sub(&one).div(&m.add(&one));
        let t = atanh(&z);
        let ln_m = t.add(&t);
        let ln2 = ln2();
        Fixed(&ln_m.0 + &ln2.0 * BigInt::from(k))
    }

    /// The log-weighted mean of `(s, src)` pairs in high precision.
    pub fn weighted_similarity(pairs: &[(f64, f64)]) -> Option<f64> {
        let mut num = Fixed(BigInt::zero());
        let mut den = Fixed(BigInt::zero());
        for &(s, src) in pairs {
            let w = ln(&Fixed::one().add(&Fixed::from_f64(src)));
            num = num.add(&Fixed::from_f64(s).mul(&w));
            den = den.add(&w);
        }
        if den.is_zero() {
            return None;
        }
        Some(num.div(&den).to_f64())
    }
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in table[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = (table[i - 1][j] + 1)
                .min(table[i][j - 1] + 1)
                .min(table[i - 1][j - 1] + cost);
        }
    }
    table[a.len()][b.len()]
}

/// Reference lexical score on already-normalized, ASCII-lowercase inputs.
pub fn lexical_reference(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let mut ta: Vec<&str> = a.split(' ').filter(|t| !t.is_empty()).collect();
    let mut tb: Vec<&str> = b.split(' ').filter(|t| !t.is_empty()).collect();
    ta.sort();
    ta.dedup();
    tb.sort();
    tb.dedup();
    let inter = ta.iter().filter(|t| tb.contains(t)).count();
    let union = ta.len() + tb.len() - inter;
    let jaccard = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let longest = a.chars().count().max(b.chars().count());
    let edit = if longest == 0 {
        1.0
    } else {
        1.0 - levenshtein(a, b) as f64 / longest as f64
    };
    (0.5 * jaccard + 0.5 * edit).clamp(0.0, 1.0)
}

/// Greedy matching replayed from a full score matrix.
///
/// `scores[i][j]` is the score of source `i` against target `j`; both sides
/// are already in canonical order. Returns the chosen target per source.
pub fn greedy_trace(scores: &[Vec<f64>]) -> Vec<Option<usize>> {
    let targets = scores.first().map_or(0, Vec::len);
    let mut free: Vec<usize> = (0..targets).collect();
    let mut chosen = Vec::new();
    for row in scores {
        let mut ranked: Vec<usize> = free.clone();
        // Highest score first, then smallest target index.
        ranked.sort_by(|&x, &y| row[y].partial_cmp(&row[x]).unwrap().then(x.cmp(&y)));
        match ranked.first() {
            Some(&j) => {
                free.retain(|&t| t != j);
                chosen.push(Some(j));
            }
            None => chosen.push(None),
        }
    }
    chosen
}

/// Small random single-word label from a tiny alphabet, so collisions happen.
pub fn small_label(rng: &mut impl Rng) -> String {
    const WORDS: [&str; 6] = ["audit", "trust", "law", "norms", "policy", "media"];
    let n = rng.gen_range(1..=2);
    (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random ontology with at most `max_descriptors` descriptors in total.
pub fn random_ontology(rng: &mut impl Rng, max_descriptors: usize) -> Ontology {
    let mut raw: Vec<RawEntity> = Vec::new();
    let mut budget = rng.gen_range(0..=max_descriptors);
    for e in 0..rng.gen_range(1..=3) {
        let mut properties = Vec::new();
        for p in 0..rng.gen_range(1..=3) {
            let mut descriptors: Vec<RawDescriptor> = Vec::new();
            let count = if budget == 0 {
                0
            } else {
                rng.gen_range(0..=budget.min(3))
            };
            budget -= count;
            for d in 0..count {
                descriptors.push(RawDescriptor {
                    label: format!("{} {d}", small_label(rng)),
                    kind: if rng.gen_bool(0.5) {
                        DescriptorKind::Essential
                    } else {
                        DescriptorKind::Contextual
                    },
                    source_count: rng.gen_range(0..100),
                });
            }
            properties.push(RawProperty {
                name: format!("prop {p}"),
                value: rng.gen_bool(0.7).then(|| small_label(rng)),
                descriptors,
            });
        }
        raw.push(RawEntity {
            name: format!("entity {e}"),
            properties,
        });
    }
    build_ontology("random", raw).expect("generated ontology is valid")
}

pub mod naive {
    //! Nested-loop versions of the relational operations over plain vectors.

    use std::collections::BTreeSet;

    use rand::Rng;

    use ctxalign::model::{DescriptorId, DescriptorKind, EntityId, Ontology, PropertyId};
    use ctxalign::normalize_label;
    use ctxalign::relational::{self as rel, DescriptorTriple, PropertyTriple, Relation};

    fn push_unique<T: PartialEq>(out: &mut Vec<T>, item: T) {
        if !out.contains(&item) {
            out.push(item);
        }
    }

    fn to_set<T: Ord>(v: Vec<T>) -> BTreeSet<T> {
        let n = v.len();
        let set: BTreeSet<T> = v.into_iter().collect();
        assert_eq!(set.len(), n, "naive output has duplicates");
        set
    }

    pub fn property_triples(o: &Ontology) -> Vec<PropertyTriple> {
        let mut out = Vec::new();
        for e in o.entities() {
            for p in e.properties() {
                push_unique(
                    &mut out,
                    PropertyTriple {
                        entity: e.id().clone(),
                        property: p.id().clone(),
                        value: p.value().to_string(),
                    },
                );
            }
        }
        out
    }

    pub fn descriptor_triples(o: &Ontology, kind: Option<DescriptorKind>) -> Vec<DescriptorTriple> {
        let mut out = Vec::new();
        for e in o.entities() {
            for p in e.properties() {
                for d in p.descriptors() {
                    if kind.is_some_and(|k| k != d.kind()) {
                        continue;
                    }
                    push_unique(
                        &mut out,
                        DescriptorTriple {
                            property: p.id().clone(),
                            descriptor: d.id().clone(),
                            value: normalize_label(d.label()),
                            kind: d.kind(),
                            source_count: d.source_count(),
                        },
                    );
                }
            }
        }
        out
    }

    pub fn project_props(r: &[PropertyTriple], e: &EntityId) -> Vec<(PropertyId, String)> {
        let mut out = Vec::new();
        for t in r {
            if &t.entity == e {
                push_unique(&mut out, (t.property.clone(), t.value.clone()));
            }
        }
        out
    }

    pub fn project_descriptors(r: &[DescriptorTriple], p: &PropertyId) -> Vec<(DescriptorId, String)> {
        let mut out = Vec::new();
        for t in r {
            if &t.property == p {
                push_unique(&mut out, (t.descriptor.clone(), t.value.clone()));
            }
        }
        out
    }

    pub fn select_entities(r: &[PropertyTriple]) -> Vec<(EntityId, EntityId)> {
        let mut out = Vec::new();
        for a in r {
            for b in r {
                if a.entity < b.entity && a.value == b.value {
                    push_unique(&mut out, (a.entity.clone(), b.entity.clone()));
                }
            }
        }
        out
    }

    pub fn select_properties(r: &[DescriptorTriple]) -> Vec<(PropertyId, PropertyId)> {
        let mut out = Vec::new();
        for a in r {
            for b in r {
                if a.property < b.property && a.value == b.value {
                    push_unique(&mut out, (a.property.clone(), b.property.clone()));
                }
            }
        }
        out
    }

    pub fn union<T: Clone + PartialEq>(a: &[T], b: &[T]) -> Vec<T> {
        let mut out = Vec::new();
        for t in a.iter().chain(b) {
            push_unique(&mut out, t.clone());
        }
        out
    }

    pub fn difference<T: Clone + PartialEq>(a: &[T], b: &[T]) -> Vec<T> {
        let mut out = Vec::new();
        for t in a {
            if !b.contains(t) {
                push_unique(&mut out, t.clone());
            }
        }
        out
    }

    const ENTITIES: [&str; 3] = ["privacy", "dignity", "trust"];
    const PROPERTIES: [&str; 3] = ["privacy/consent", "dignity/respect", "trust/audit"];
    const VALUES: [&str; 3] = ["law", "norms", "media"];

    pub fn random_property_relation(rng: &mut impl Rng) -> Vec<PropertyTriple> {
        let n = rng.gen_range(0..=8);
        (0..n)
            .map(|_| {
                let e = ENTITIES[rng.gen_range(0..3)];
                PropertyTriple {
                    entity: EntityId::parse(e).unwrap(),
                    property: PropertyId::parse(&format!("{e}/p{}", rng.gen_range(0..2))).unwrap(),
                    value: VALUES[rng.gen_range(0..3)].to_string(),
                }
            })
            .collect()
    }

    pub fn random_descriptor_relation(rng: &mut impl Rng, kind: DescriptorKind) -> Vec<DescriptorTriple> {
        let n = rng.gen_range(0..=8);
        (0..n)
            .map(|_| {
                let p = PROPERTIES[rng.gen_range(0..3)];
                DescriptorTriple {
                    property: PropertyId::parse(p).unwrap(),
                    descriptor: DescriptorId::parse(&format!("{p}/d{}", rng.gen_range(0..3))).unwrap(),
                    value: VALUES[rng.gen_range(0..3)].to_string(),
                    kind,
                    source_count: rng.gen_range(0..3),
                }
            })
            .collect()
    }

    fn check<T: Ord + std::fmt::Debug>(what: &str, got: BTreeSet<T>, want: Vec<T>) -> Result<(), String> {
        let want = to_set(want);
        if got == want {
            Ok(())
        } else {
            Err(format!("{what}: got {got:?}, want {want:?}"))
        }
    }

    fn set_of<T: Ord + Clone>(r: &Relation<T>) -> BTreeSet<T> {
        r.iter().cloned().collect()
    }

    /// One randomized comparison of every operation against its nested-loop twin.
    pub fn compare_all(rng: &mut impl Rng) -> Result<(), String> {
        use DescriptorKind::{Contextual, Essential};

        let props_a = random_property_relation(rng);
        let props_b = random_property_relation(rng);
        let ess = random_descriptor_relation(rng, Essential);
        let ctx = random_descriptor_relation(rng, Contextual);
        let ess_b = random_descriptor_relation(rng, Essential);

        let rel_pa: Relation<PropertyTriple> = props_a.iter().cloned().collect();
        let rel_pb: Relation<PropertyTriple> = props_b.iter().cloned().collect();
        let rel_e: Relation<DescriptorTriple> = ess.iter().cloned().collect();
        let rel_c: Relation<DescriptorTriple> = ctx.iter().cloned().collect();
        let rel_eb: Relation<DescriptorTriple> = ess_b.iter().cloned().collect();

        for e in ENTITIES {
            let e = EntityId::parse(e).unwrap();
            check(
                "project props",
                rel::project_property_values(&rel_pa, &e),
                project_props(&props_a, &e),
            )?;
        }
        for p in PROPERTIES {
            let p = PropertyId::parse(p).unwrap();
            let got = rel::project_essential_values(&rel_e, &p).map_err(|e| e.to_string())?;
            check("project essential", got, project_descriptors(&ess, &p))?;
            let got = rel::project_contextual_values(&rel_c, &p).map_err(|e| e.to_string())?;
            check("project contextual", got, project_descriptors(&ctx, &p))?;
        }
        let joined = rel::join_descriptors(&rel_e, &rel_c).map_err(|e| e.to_string())?;
        check("join", set_of(&joined), union(&ess, &ctx))?;
        check(
            "select entities",
            rel::select_matching_entities(&rel_pa),
            select_entities(&props_a),
        )?;
        let got = rel::select_matching_by_essential(&rel_e).map_err(|e| e.to_string())?;
        check("select essential", got, select_properties(&ess))?;
        let got = rel::select_matching_by_contextual(&rel_c).map_err(|e| e.to_string())?;
        check("select contextual", got, select_properties(&ctx))?;
        check(
            "diff props",
            set_of(&rel::relation_difference(&rel_pa, &rel_pb)),
            difference(&props_a, &props_b),
        )?;
        check(
            "diff essential",
            set_of(&rel::relation_difference(&rel_e, &rel_eb)),
            difference(&ess, &ess_b),
        )?;
        check(
            "diff combined",
            set_of(&rel::relation_difference(&joined, &rel_eb)),
            difference(&union(&ess, &ctx), &ess_b),
        )?;

        // Ontology-derived relations and the per-property combined description.
        let o = super::random_ontology(rng, 8);
        check(
            "property triples",
            set_of(&rel::property_triples(&o)),
            property_triples(&o),
        )?;
        check(
            "essential triples",
            set_of(&rel::essential_triples(&o)),
            descriptor_triples(&o, Some(Essential)),
        )?;
        check(
            "contextual triples",
            set_of(&rel::contextual_triples(&o)),
            descriptor_triples(&o, Some(Contextual)),
        )?;
        let all = descriptor_triples(&o, None);
        for e in o.entities() {
            for p in e.properties() {
                let got = rel::combined_description(&o, p.id()).map_err(|e| e.to_string())?;
                let want: Vec<_> = all.iter().filter(|t| &t.property == p.id()).cloned().collect();
                check("combined description", set_of(&got), want)?;
            }
        }
        Ok(())
    }
}
