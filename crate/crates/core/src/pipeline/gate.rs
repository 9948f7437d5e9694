use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::formats::AnnotationRecord;
use crate::geometry::{ContourPrimitive, Primitive, Vec2};

use super::ModelSchema;

const INFLATION: f64 = 1.5;
const MIN_HALF_WIDTH: f64 = 0.05;
const BOX_LIMIT: (f64, f64) = (-0.5, 1.5);

/// Closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn inflated(lo: f64, hi: f64) -> Self {
        let c = 0.5 * (lo + hi);
        let hw = (INFLATION * 0.5 * (hi - lo)).max(MIN_HALF_WIDTH);
        Self { lo: c - hw, hi: c + hw }
    }

    fn clamped(self, lo: f64, hi: f64) -> Self {
        Self { lo: self.lo.clamp(lo, hi), hi: self.hi.clamp(lo, hi) }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// Distance from the center in units of the half-width.
    pub fn normalized_distance(&self, v: f64) -> f64 {
        let hw = 0.5 * (self.hi - self.lo);
        if hw <= 0.0 {
            return if v == self.center() { 0.0 } else { f64::INFINITY };
        }
        (v - self.center()).abs() / hw
    }
}

/// Allowed reference-point box for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateBox {
    pub x: Interval,
    pub y: Interval,
    /// Positional variance of the training reference points.
    pub variance: f64,
    /// Mean unit chord direction of contour slots, used to orient candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 2]>,
}

impl GateBox {
    pub fn contains(&self, p: Vec2) -> bool {
        self.x.contains(p.x) && self.y.contains(p.y)
    }

    pub fn margin(&self, p: Vec2) -> f64 {
        self.x.normalized_distance(p.x).hypot(self.y.normalized_distance(p.y))
    }
}

/// Allowed displacement `ref(b) − ref(a)` for a slot pair `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGate {
    pub a: usize,
    pub b: usize,
    pub dx: Interval,
    pub dy: Interval,
}

/// Training-derived pruning boxes for the assignment search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricGate {
    pub slots: Vec<GateBox>,
    pub pairs: Vec<PairGate>,
}

/// Fits the gate to annotated positives.
pub fn fit_gate(annotations: &[AnnotationRecord], schema: &ModelSchema) -> Result<GeometricGate> {
    if annotations.len() < 2 {
        return Err(Error::InsufficientData(format!("gate needs at least 2 annotations, got {}", annotations.len())));
    }
    let prims = annotations.iter().map(|a| a.primitives(schema)).collect::<Result<Vec<_>>>()?;
    GeometricGate::fit(&prims, schema.slots.len())
}

impl GeometricGate {
    /// Fits boxes to primitive lists given in slot order.
    pub fn fit(examples: &[Vec<Primitive>], n_slots: usize) -> Result<Self> {
        if examples.len() < 2 {
            return Err(Error::InsufficientData("gate needs at least 2 examples".into()));
        }
        if examples.iter().any(|e| e.len() != n_slots) {
            return Err(invalid("gate example has the wrong slot count"));
        }
        let refs: Vec<Vec<Vec2>> = examples.iter().map(|e| e.iter().map(Primitive::reference_point).collect()).collect();
        let range = |vals: &mut dyn Iterator<Item = f64>| {
            vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let mut slots = Vec::with_capacity(n_slots);
        for i in 0..n_slots {
            let (xl, xh) = range(&mut refs.iter().map(|r| r[i].x));
            let (yl, yh) = range(&mut refs.iter().map(|r| r[i].y));
            let n = refs.len() as f64;
            let mx = refs.iter().map(|r| r[i].x).sum::<f64>() / n;
            let my = refs.iter().map(|r| r[i].y).sum::<f64>() / n;
            let variance = refs.iter().map(|r| (r[i].x - mx).powi(2) + (r[i].y - my).powi(2)).sum::<f64>() / n;
            let direction = match &examples[0][i] {
                Primitive::Contour(_) => {
                    let mut d = Vec2::new(0.0, 0.0);
                    for e in examples {
                        if let Some(c) = e[i].as_contour() {
                            let chord = c.last() - c.first();
                            if chord.norm() > 0.0 {
                                d = d + chord * (1.0 / chord.norm());
                            }
                        }
                    }
                    (d.norm() > 1e-9).then(|| [d.x / d.norm(), d.y / d.norm()])
                }
                _ => None,
            };
            slots.push(GateBox {
                x: Interval::inflated(xl, xh).clamped(BOX_LIMIT.0, BOX_LIMIT.1),
                y: Interval::inflated(yl, yh).clamped(BOX_LIMIT.0, BOX_LIMIT.1),
                variance,
                direction,
            });
        }
        let mut pairs = Vec::new();
        for a in 0..n_slots {
            for b in a + 1..n_slots {
                let (xl, xh) = range(&mut refs.iter().map(|r| r[b].x - r[a].x));
                let (yl, yh) = range(&mut refs.iter().map(|r| r[b].y - r[a].y));
                pairs.push(PairGate { a, b, dx: Interval::inflated(xl, xh), dy: Interval::inflated(yl, yh) });
            }
        }
        Ok(Self { slots, pairs })
    }

    fn pair(&self, a: usize, b: usize) -> (&PairGate, f64) {
        let n = self.slots.len();
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let idx = lo * n - lo * (lo + 1) / 2 + (hi - lo - 1);
        (&self.pairs[idx], sign)
    }

    pub fn slot_passes(&self, slot: usize, p: Vec2) -> bool {
        self.slots[slot].contains(p)
    }

    pub fn pair_passes(&self, a: usize, pa: Vec2, b: usize, pb: Vec2) -> bool {
        let (g, s) = self.pair(a, b);
        let d = (pb - pa) * s;
        g.dx.contains(d.x) && g.dy.contains(d.y)
    }

    pub fn pair_margin(&self, a: usize, pa: Vec2, b: usize, pb: Vec2) -> f64 {
        let (g, s) = self.pair(a, b);
        let d = (pb - pa) * s;
        g.dx.normalized_distance(d.x).hypot(g.dy.normalized_distance(d.y))
    }

    /// Whether a complete assignment (slot order) passes every box.
    pub fn passes(&self, prims: &[&Primitive]) -> bool {
        let refs: Vec<Vec2> = prims.iter().map(|p| p.reference_point()).collect();
        (0..refs.len()).all(|i| self.slot_passes(i, refs[i]))
            && (0..refs.len()).all(|a| (a + 1..refs.len()).all(|b| self.pair_passes(a, refs[a], b, refs[b])))
    }

    /// Sum of normalized slot and pair distances; lower is more typical.
    pub fn margin(&self, prims: &[&Primitive]) -> f64 {
        let refs: Vec<Vec2> = prims.iter().map(|p| p.reference_point()).collect();
        let mut m = 0.0;
        for a in 0..refs.len() {
            m += self.slots[a].margin(refs[a]);
            for b in a + 1..refs.len() {
                m += self.pair_margin(a, refs[a], b, refs[b]);
            }
        }
        m
    }

    /// Orients a contour along the slot's training chord direction.
    pub fn orient(&self, slot: usize, c: &ContourPrimitive) -> ContourPrimitive {
        match self.slots[slot].direction {
            Some([dx, dy]) if !c.is_closed() => {
                let chord = c.last() - c.first();
                if chord.dot(Vec2::new(dx, dy)) < 0.0 {
                    c.reversed()
                } else {
                    c.clone()
                }
            }
            _ => c.clone(),
        }
    }
}
