use super::{Gradients, SurrogateModel};
use crate::record::MaskScoreRecord;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero (inputs that are switched off) compare absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-7;

/// Largest relative error between the backpropagated gradient of the
/// single-record loss `(f(m) - s)^2` and its central finite difference,
/// taken over every parameter.
///
/// The relative error of one parameter is `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
/// `epsilon` is clamped into `[1e-7, 1e-3]`.
pub fn gradient_check(model: &SurrogateModel, record: &MaskScoreRecord, epsilon: f64) -> f64 {
    let epsilon = epsilon.clamp(1e-7, 1e-3);
    let mut grads = Gradients::zeros(model);
    let mut scratch = vec![0.0; model.hidden_dim()];
    model.accumulate_gradient(record.mask.bits(), record.score, 1.0, &mut grads, &mut scratch);
    let analytic = grads.flat();

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (index, &a) in analytic.iter().enumerate() {
        let original = model.param(index);
        probe.set_param(index, original + epsilon);
        let plus = probe.record_loss(record);
        probe.set_param(index, original - epsilon);
        let minus = probe.record_loss(record);
        probe.set_param(index, original);
        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Mask;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn random_small_models_pass() {
        let mut rng = seeded(99);
        for _ in 0..20 {
            let model = SurrogateModel::init_xavier(6, &mut rng);
            let mask = Mask::from_u64(6, rng.gen_range(0..64));
            let record = MaskScoreRecord::new(mask, 1.0, rng.gen_range(0.0..1.0));
            let err = gradient_check(&model, &record, 1e-5);
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn zero_model_fixed_point() {
        let model = SurrogateModel::zeros(4);
        let record = MaskScoreRecord::new("1011".parse().unwrap(), 1.0, 0.3);
        assert!(gradient_check(&model, &record, 1e-5) < 1e-6);
    }

    #[test]
    fn celu_kink_probe() {
        // Hidden unit 0 receives exactly zero pre-activation: W1 row 0 is
        // zero and b1[0] = 0. The right derivative (1) equals the left limit
        // exp(0), so finite differences still agree.
        let mut model = SurrogateModel::init_xavier(5, &mut seeded(5));
        let h = model.hidden_dim();
        for i in 0..5 {
            model.set_param(i * h, 0.0);
        }
        let record = MaskScoreRecord::new("11010".parse().unwrap(), 1.0, 0.9);
        let mut z = vec![0.0; h];
        model.pre_activation(record.mask.bits(), &mut z);
        assert_eq!(z[0], 0.0);
        assert!(gradient_check(&model, &record, 1e-5) < 1e-3);
    }
}
