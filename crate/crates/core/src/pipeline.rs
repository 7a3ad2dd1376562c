//! The standard chain spec → grid → assembled operator → double → Calderón
//! projections, shared by the CLI, the sweeps and the tests.

use crate::double::{assemble_double, calderon, CalderonBundle, CalderonTolerances, DoubleOperator};
use crate::error::Result;
use crate::geometry::{build_discretization, trace_and_dual, Discretization, TraceSystem};
use crate::operator::{assemble_operator, AssembledOperator, Operator, OperatorSpec};
use crate::scalar::{lit, Real};

#[derive(Clone, Debug)]
pub struct Pipeline<R: Real> {
    pub disc: Discretization<R>,
    pub op: AssembledOperator<R>,
    pub traces: TraceSystem<R>,
    pub dbl: DoubleOperator<R>,
    pub bundle: CalderonBundle<R>,
}

impl<R: Real> Pipeline<R> {
    pub fn run(spec: &OperatorSpec, rank_tol: f64, tol: &CalderonTolerances) -> Result<Self> {
        let disc = build_discretization::<R>(&spec.geometry)?;
        let op = assemble_operator(&Operator::from_spec(spec)?, &disc)?;
        let traces = trace_and_dual(&disc);
        let dbl = assemble_double(&op, &traces, lit(rank_tol))?;
        let bundle = calderon(&dbl, &op, &disc, &traces, tol)?;
        Ok(Self {
            disc,
            op,
            traces,
            dbl,
            bundle,
        })
    }
}
