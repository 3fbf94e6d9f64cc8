//! CSV input and output.
//!
//! Bag files have the header `bag_id,f0,...,f{d-1}` and one sample per row.
//! Rows of a bag need not be contiguous; bags are emitted in order of first
//! appearance and rows keep their file order within each bag.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernel::{common_dim, pooled_moments, Bag};
use crate::similarity::NeighborGraph;

/// Read bags from a CSV file.
pub fn load_bags_csv(path: impl AsRef<Path>) -> Result<Vec<Bag>> {
    read_bags_csv(File::open(path)?)
}

/// Read bags from any CSV source.
pub fn read_bags_csv<R: Read>(reader: R) -> Result<Vec<Bag>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput("bag file has no header".into()));
    }
    if headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "header needs bag_id and at least one feature column".into(),
        });
    }
    let d = headers.len() - 1;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        if record.len() != d + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", d + 1, record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty bag_id".into(),
            });
        }
        let buf = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        for (c, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("column {}: '{cell}' is not a number", c + 1),
            })?;
            buf.push(v);
        }
    }
    if order.is_empty() {
        return Err(Error::EmptyInput("bag file has no rows".into()));
    }
    order
        .into_iter()
        .map(|id| {
            let flat = rows.remove(&id).expect("every id has rows");
            let n = flat.len() / d;
            let samples = Array2::from_shape_vec((n, d), flat)
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            Bag::new(id, samples)
        })
        .collect()
}

/// Write bags in the format read by [`load_bags_csv`]. Values use the
/// shortest representation that reads back bit-identically.
pub fn write_bags_csv<W: Write>(writer: W, bags: &[Bag]) -> Result<()> {
    let d = common_dim(bags)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["bag_id".to_string()];
    header.extend((0..d).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for bag in bags {
        for row in bag.samples().rows() {
            let mut rec = vec![bag.id().to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Square matrix with row and column labels: header `bag_id,<ids...>`.
pub fn write_labeled_matrix<W: Write>(writer: W, ids: &[&str], values: &Array2<f64>) -> Result<()> {
    if values.nrows() != ids.len() || values.ncols() != ids.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a {:?} matrix",
            ids.len(),
            values.dim()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["bag_id"];
    header.extend_from_slice(ids);
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(values.rows()) {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Neighbour graph as a 0/1 matrix; row `i` lists the members of `V_i`.
pub fn write_graph_csv<W: Write>(writer: W, ids: &[&str], graph: &NeighborGraph) -> Result<()> {
    write_labeled_matrix(writer, ids, &graph.to_matrix())
}

/// Per-task vectors (means or estimates) with header `bag_id,f0,...`.
pub fn write_vectors_csv<W: Write>(writer: W, ids: &[&str], values: &Array2<f64>) -> Result<()> {
    if values.nrows() != ids.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} rows",
            ids.len(),
            values.nrows()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["bag_id".to_string()];
    header.extend((0..values.ncols()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(values.rows()) {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Centre and scale every feature so that the pooled samples of all bags have
/// mean 0 and population standard deviation 1.
pub fn standardize(bags: &[Bag]) -> Result<Vec<Bag>> {
    let (mean, scale) = pooled_moments(bags)?;
    if let Some(k) = scale.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::ZeroVariance(k));
    }
    bags.iter()
        .map(|bag| {
            let mut x = bag.samples().clone();
            for mut row in x.rows_mut() {
                for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
                    *v = (*v - m) / s;
                }
            }
            Bag::new(bag.id(), x)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn groups_rows_by_first_appearance() {
        let text = "bag_id,f0,f1\na,1,2\nb,3,4\na,5,6\nb,7,8\nb,9,10\n";
        let bags = read_bags_csv(text.as_bytes()).unwrap();
        assert_eq!(bags.len(), 2);
        assert_eq!((bags[0].id(), bags[0].len()), ("a", 2));
        assert_eq!((bags[1].id(), bags[1].len()), ("b", 3));
        assert_eq!(bags[0].samples(), &array![[1.0, 2.0], [5.0, 6.0]]);
    }

    #[test]
    fn single_row_is_a_bag() {
        let bags = read_bags_csv("bag_id,f0\nz,0.5\n".as_bytes()).unwrap();
        assert_eq!(bags.len(), 1);
        assert_eq!(bags[0].len(), 1);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(matches!(
            read_bags_csv("".as_bytes()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            read_bags_csv("bag_id,f0\n".as_bytes()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            read_bags_csv("bag_id,f0,f1\na,1\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_bags_csv("bag_id,f0\na,1\na,x\n".as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read_bags_csv("bag_id,f0\na,NaN\n".as_bytes()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn standardize_two_points() {
        let bags = vec![
            Bag::new("a", array![[0.0]]).unwrap(),
            Bag::new("b", array![[2.0]]).unwrap(),
        ];
        let out = standardize(&bags).unwrap();
        assert_abs_diff_eq!(out[0].samples()[[0, 0]], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1].samples()[[0, 0]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn standardize_names_the_constant_feature() {
        let bags = vec![Bag::new("a", array![[0.0, 3.0], [1.0, 3.0]]).unwrap()];
        assert!(matches!(standardize(&bags), Err(Error::ZeroVariance(1))));
    }

    #[test]
    fn matrix_writer_rejects_wrong_labels() {
        let mut out = Vec::new();
        assert!(write_labeled_matrix(&mut out, &["a"], &Array2::zeros((2, 2))).is_err());
    }
}
