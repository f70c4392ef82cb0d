use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::Polyhedron;
use super::{SynthesisError, FEAS_TOL};

/// One piece of the explicit law: `u = K x + b` for `x ∈ poly`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalRegion {
    pub poly: Polyhedron,
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub active_set: Vec<usize>,
}

impl CriticalRegion {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x + &self.offset
    }
}

/// Piecewise-affine state feedback over a polyhedral partition.
///
/// Immutable once built; shared read access from several threads is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaController {
    pub n: usize,
    pub m: usize,
    pub regions: Vec<CriticalRegion>,
}

impl PwaController {
    pub fn new(n: usize, m: usize, regions: Vec<CriticalRegion>) -> Result<Self, SynthesisError> {
        if regions.is_empty() {
            return Err(SynthesisError::EmptyController);
        }
        for r in &regions {
            if r.gain.shape() != (m, n) || r.offset.len() != m || r.poly.dim() != n {
                return Err(SynthesisError::InvalidProblem("region dimensions do not match the controller".into()));
            }
        }
        Ok(Self { n, m, regions })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Lowest-index region containing `x` within the feasibility tolerance.
    pub fn locate(&self, x: &DVector<f64>) -> Result<usize, SynthesisError> {
        self.regions
            .iter()
            .position(|r| r.poly.contains(x, FEAS_TOL))
            .ok_or(SynthesisError::NotFound)
    }

    pub fn eval(&self, sigma: usize, x: &DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
        self.regions
            .get(sigma)
            .map(|r| r.eval(x))
            .ok_or(SynthesisError::InvalidRegion(sigma))
    }

    pub fn gain(&self, sigma: usize) -> Result<&DMatrix<f64>, SynthesisError> {
        self.regions.get(sigma).map(|r| &r.gain).ok_or(SynthesisError::InvalidRegion(sigma))
    }

    pub fn offset(&self, sigma: usize) -> Result<&DVector<f64>, SynthesisError> {
        self.regions.get(sigma).map(|r| &r.offset).ok_or(SynthesisError::InvalidRegion(sigma))
    }

    /// Locate-then-evaluate convenience.
    pub fn control(&self, x: &DVector<f64>) -> Result<(usize, DVector<f64>), SynthesisError> {
        let sigma = self.locate(x)?;
        Ok((sigma, self.regions[sigma].eval(x)))
    }

    pub fn to_json(&self) -> String {
        let doc = ControllerDoc::from(self);
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Fixed17::default());
        doc.serialize(&mut ser).expect("controller serialization");
        out.push(b'\n');
        String::from_utf8(out).expect("utf-8 json")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthesisError> {
        let doc: ControllerDoc =
            serde_json::from_str(text).map_err(|e| SynthesisError::Parse(e.to_string()))?;
        doc.try_into()
    }
}

/// Serialized form: matrices as row-major nested arrays.
#[derive(Debug, Serialize, Deserialize)]
struct ControllerDoc {
    n: usize,
    m: usize,
    regions: Vec<RegionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionDoc {
    a_ineq: Vec<Vec<f64>>,
    b_ineq: Vec<f64>,
    k: Vec<Vec<f64>>,
    b: Vec<f64>,
    active_set: Vec<usize>,
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>, SynthesisError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(SynthesisError::Parse(format!("matrix row length differs from {ncols}")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<&PwaController> for ControllerDoc {
    fn from(c: &PwaController) -> Self {
        ControllerDoc {
            n: c.n,
            m: c.m,
            regions: c
                .regions
                .iter()
                .map(|r| RegionDoc {
                    a_ineq: rows(&r.poly.a),
                    b_ineq: r.poly.b.iter().cloned().collect(),
                    k: rows(&r.gain),
                    b: r.offset.iter().cloned().collect(),
                    active_set: r.active_set.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ControllerDoc> for PwaController {
    type Error = SynthesisError;

    fn try_from(doc: ControllerDoc) -> Result<Self, Self::Error> {
        let mut regions = Vec::with_capacity(doc.regions.len());
        for r in doc.regions {
            let a = from_rows(&r.a_ineq, doc.n)?;
            if a.nrows() != r.b_ineq.len() {
                return Err(SynthesisError::Parse("a_ineq and b_ineq row counts differ".into()));
            }
            if r.k.len() != doc.m || r.b.len() != doc.m {
                return Err(SynthesisError::Parse("gain or offset has wrong row count".into()));
            }
            regions.push(CriticalRegion {
                poly: Polyhedron::new(a, DVector::from_vec(r.b_ineq)),
                gain: from_rows(&r.k, doc.n)?,
                offset: DVector::from_vec(r.b),
                active_set: r.active_set,
            });
        }
        PwaController::new(doc.n, doc.m, regions)
    }
}

/// JSON formatter printing every float with 17 significant digits.
#[derive(Default)]
pub(crate) struct Fixed17 {
    indent: usize,
    has_value: bool,
}

impl Fixed17 {
    fn newline<W: ?Sized + Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl serde_json::ser::Formatter for Fixed17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }

    // Objects are indented; arrays of numbers stay on one line.
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> std::io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_region() -> PwaController {
        // x ≤ 0 → u = 1; x ≥ 0 → u = −x + 1
        let left = CriticalRegion {
            poly: Polyhedron::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![0.0, 5.0])),
            gain: DMatrix::zeros(1, 1),
            offset: DVector::from_vec(vec![1.0]),
            active_set: vec![0],
        };
        let right = CriticalRegion {
            poly: Polyhedron::new(DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]), DVector::from_vec(vec![0.0, 5.0])),
            gain: DMatrix::from_element(1, 1, -1.0),
            offset: DVector::from_vec(vec![1.0]),
            active_set: vec![],
        };
        PwaController::new(1, 1, vec![left, right]).unwrap()
    }

    #[test]
    fn shared_facet_resolves_to_lowest_index() {
        let c = two_region();
        assert_eq!(c.locate(&DVector::from_vec(vec![0.0])).unwrap(), 0);
        assert_eq!(c.locate(&DVector::from_vec(vec![1e-10])).unwrap(), 0);
        assert_eq!(c.locate(&DVector::from_vec(vec![0.5])).unwrap(), 1);
        assert_eq!(c.locate(&DVector::from_vec(vec![9.0])), Err(SynthesisError::NotFound));
    }

    #[test]
    fn eval_constant_and_origin() {
        let c = two_region();
        assert_eq!(c.eval(0, &DVector::from_vec(vec![-3.3])).unwrap()[0], 1.0);
        assert_eq!(c.eval(1, &DVector::from_vec(vec![0.0])).unwrap()[0], 1.0);
        assert_eq!(c.eval(2, &DVector::from_vec(vec![0.0])), Err(SynthesisError::InvalidRegion(2)));
    }

    #[test]
    fn json_prints_seventeen_digits_and_roundtrips() {
        let mut c = two_region();
        c.regions[1].gain[(0, 0)] = -0.1 - 0.2;
        let text = c.to_json();
        assert!(text.contains("-3.0000000000000004e-1"), "{text}");
        let back = PwaController::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn malformed_json_reports_location() {
        let err = PwaController::from_json("{\"n\": 1,\n \"m\": }").unwrap_err();
        match err {
            SynthesisError::Parse(msg) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
