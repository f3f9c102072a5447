//! VTK legacy STRUCTURED_POINTS output (ASCII).

use crate::error::Result;
use crate::fields::field::{ScalarField, VectorField};
use crate::fields::grid::Grid;
use std::io::Write;

fn header(w: &mut impl Write, grid: &Grid, title: &str) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", grid.dims[0], grid.dims[1], grid.dims[2])?;
    writeln!(w, "ORIGIN {} {} {}", grid.origin[0], grid.origin[1], grid.origin[2])?;
    writeln!(w, "SPACING {} {} {}", grid.h, grid.h, grid.h)?;
    writeln!(w, "POINT_DATA {}", grid.len())?;
    Ok(())
}

/// Write one or more named fields sharing a grid into a single VTK file.
pub struct VtkWriter<W: Write> {
    w: W,
    grid: Grid,
    wrote_header: bool,
}

impl<W: Write> VtkWriter<W> {
    pub fn new(w: W, grid: Grid) -> Self {
        VtkWriter {
            w,
            grid,
            wrote_header: false,
        }
    }

    fn ensure_header(&mut self, title: &str) -> Result<()> {
        if !self.wrote_header {
            header(&mut self.w, &self.grid, title)?;
            self.wrote_header = true;
        }
        Ok(())
    }

    pub fn scalar(&mut self, name: &str, field: &ScalarField) -> Result<()> {
        self.ensure_header("porecryst fields")?;
        writeln!(self.w, "SCALARS {name} double 1")?;
        writeln!(self.w, "LOOKUP_TABLE default")?;
        for v in &field.data {
            writeln!(self.w, "{v:.12e}")?;
        }
        Ok(())
    }

    pub fn vector(&mut self, name: &str, field: &VectorField) -> Result<()> {
        self.ensure_header("porecryst fields")?;
        writeln!(self.w, "VECTORS {name} double")?;
        for idx in 0..self.grid.len() {
            writeln!(
                self.w,
                "{:.12e} {:.12e} {:.12e}",
                field.comps[0][idx], field.comps[1][idx], field.comps[2][idx]
            )?;
        }
        Ok(())
    }
}
