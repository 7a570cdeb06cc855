//! Serde adapters writing matrices as nested row arrays and vectors as
//! plain arrays.

pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        s.collect_seq(rows)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("matrix rows have unequal lengths"));
        }
        Ok(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
    }
}

pub mod vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub mod vectors {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(vs: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(vs.iter().map(|v| v.as_slice()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        Ok(Vec::<Vec<f64>>::deserialize(d)?
            .into_iter()
            .map(DVector::from_vec)
            .collect())
    }
}
