use crate::error::{Error, Result};
use crate::numkit::Matrix;

fn centered_distances(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = m
                .row(i)
                .iter()
                .zip(m.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    let row_means: Vec<f64> = (0..n)
        .map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    d
}

/// Sample distance correlation (biased V-statistic) between the rows of
/// `a` and `b`. Returns 0 when either distance variance vanishes.
pub fn distance_correlation(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::Query(format!(
            "distance correlation needs paired samples: {} vs {} rows",
            a.rows(),
            b.rows()
        )));
    }
    if a.rows() < 2 {
        return Err(Error::Query("distance correlation needs at least 2 samples".into()));
    }
    let n2 = (a.rows() * a.rows()) as f64;
    let da = centered_distances(a);
    let db = centered_distances(b);
    let dcov = da.iter().zip(&db).map(|(x, y)| x * y).sum::<f64>() / n2;
    let var_a = da.iter().map(|x| x * x).sum::<f64>() / n2;
    let var_b = db.iter().map(|x| x * x).sum::<f64>() / n2;
    let denom = (var_a * var_b).sqrt();
    if !(denom > 0.0) {
        return Ok(0.0);
    }
    Ok((dcov / denom).clamp(0.0, 1.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn random(rng: &mut Rng, n: usize, p: usize) -> Matrix {
        let data = (0..n * p).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Matrix::from_vec(n, p, data).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let mut rng = Rng::new(1);
        let a = random(&mut rng, 40, 3);
        assert!((distance_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_argument_gives_zero() {
        let mut rng = Rng::new(2);
        let a = random(&mut rng, 10, 2);
        let c = Matrix::filled(10, 1, 4.0);
        assert_eq!(distance_correlation(&a, &c).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let a = Matrix::zeros(1, 2);
        assert!(matches!(distance_correlation(&a, &a), Err(Error::Query(_))));
        assert!(distance_correlation(&Matrix::zeros(3, 1), &Matrix::zeros(4, 1)).is_err());
    }
}
