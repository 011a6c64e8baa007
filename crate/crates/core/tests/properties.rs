use gpgmm_core::gmr::regress;
use gpgmm_core::gp::{GpTraining, JointGp};
use gpgmm_core::hgmm::{fit_em, DistanceSample, EmConfig, EmInit, Gaussian4, HgmmConfig, HgmmModel};
use gpgmm_core::kernel::KernelParams;
use gpgmm_core::normals::neighborhood_normal;
use gpgmm_core::spatial::KdTree;
use gpgmm_core::{Matrix4, ShapeSpec, Vector3, Vector4};
use nalgebra::{Rotation3, Unit};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn points(r: f64, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(vec3(r), n)
}

fn shape() -> impl Strategy<Value = ShapeSpec> {
    let sphere = (vec3(1.0), 0.1..2.0).prop_map(|(center, radius)| ShapeSpec::Sphere { center, radius });
    let boxed = (vec3(1.0), vec3(1.0)).prop_map(|(a, b)| ShapeSpec::Box {
        min: a.inf(&b) - Vector3::repeat(0.05),
        max: a.sup(&b) + Vector3::repeat(0.05),
    });
    let plane = (vec3(1.0), vec3(1.0))
        .prop_filter("normal", |(_, n)| n.norm() > 1e-3)
        .prop_map(|(point, normal)| ShapeSpec::Plane {
            point,
            normal,
            half_extent: 1.0,
        });
    let leaf = prop_oneof![sphere, boxed, plane];
    prop::collection::vec(leaf.clone(), 1..4)
        .prop_map(ShapeSpec::Union)
        .boxed()
        .prop_union(leaf.boxed())
}

fn rotation() -> impl Strategy<Value = Rotation3<f64>> {
    (vec3(1.0).prop_filter("axis", |a| a.norm() > 1e-2), -3.1..3.1)
        .prop_map(|(axis, angle)| Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle))
}

fn component(seed: [f64; 20], weight: f64) -> Gaussian4 {
    let a = Matrix4::from_fn(|i, j| seed[4 * i + j]);
    let mean = Vector4::from_fn(|i, _| seed[16 + i]);
    Gaussian4::new(weight, mean, a * a.transpose() + Matrix4::identity() * 0.01).unwrap()
}

fn mixture() -> impl Strategy<Value = HgmmModel> {
    prop::collection::vec((prop::array::uniform20(-1.0..1.0f64), 0.1..1.0f64), 1..6).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.1).sum();
        let leaves: Vec<Gaussian4> = parts.iter().map(|(s, w)| component(*s, w / total)).collect();
        let n = leaves.len();
        HgmmModel::from_leaves(leaves, vec![0; n], HgmmConfig::default()).unwrap()
    })
}

fn training(pts: &[Vector3<f64>], gradients: bool) -> GpTraining {
    let n = pts.len();
    GpTraining {
        points: pts.to_vec(),
        values: pts.iter().map(|p| 0.1 * p.x).collect(),
        gradients: gradients.then(|| pts.iter().map(|p| (p + Vector3::repeat(0.01)).normalize()).collect()),
        prior_means: pts.iter().map(|p| 0.05 * p.y).collect(),
        prior_gradients: vec![Vector3::zeros(); n],
        prior_scales: pts.iter().map(|p| 0.2 + 0.1 * p.z.abs()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sdf_is_one_lipschitz(s in shape(), x in vec3(3.0), y in vec3(3.0)) {
        prop_assert!((s.sdf(&x) - s.sdf(&y)).abs() <= (x - y).norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn knn_agrees_with_brute_force(pts in points(1.0, 1..200), q in vec3(1.5), k in 1usize..12) {
        let tree = KdTree::new(&pts);
        if k > pts.len() {
            prop_assert!(tree.knn(&q, k).is_err());
            return Ok(());
        }
        let got = tree.knn(&q, k).unwrap();
        let mut all: Vec<f64> = pts.iter().map(|p| (p - q).norm()).collect();
        all.sort_by(f64::total_cmp);
        prop_assert_eq!(got.len(), k);
        for ((i, d), want) in got.iter().zip(&all) {
            prop_assert!((d - want).abs() <= 1e-12);
            prop_assert!(((pts[*i] - q).norm() - d).abs() <= 1e-12);
        }
    }

    #[test]
    fn pca_normal_rotates_with_the_neighborhood(
        nbrs in points(0.5, 5..30),
        rot in rotation(),
        flat in 0.0..0.02f64,
    ) {
        // squash the neighborhood onto a slab so the normal is well defined
        let nbrs: Vec<Vector3<f64>> = nbrs.iter().map(|p| Vector3::new(p.x, p.y, p.z * flat)).collect();
        let spread = nbrs.iter().map(|p| p.x.abs() + p.y.abs()).sum::<f64>();
        prop_assume!(spread > 0.5);
        let view = Vector3::new(0.0, 0.0, 5.0);
        let p = nbrs[0];
        let n = neighborhood_normal(&p, &nbrs, Some(view));
        let rotated: Vec<Vector3<f64>> = nbrs.iter().map(|q| rot * q).collect();
        let m = neighborhood_normal(&(rot * p), &rotated, Some(rot * view));
        match (n, m) {
            (Some(n), Some(m)) => prop_assert!((rot * n - m).norm() <= 1e-6, "{:?} {:?}", rot * n, m),
            (a, b) => prop_assert!(a.is_none() && b.is_none()),
        }
    }

    #[test]
    fn gmr_variance_is_non_negative(model in mixture(), x in vec3(3.0), j in 1usize..8) {
        let p = regress(&model, &x, j).unwrap();
        prop_assert!(p.variance >= 0.0 && p.variance.is_finite());
        prop_assert!(p.mean.is_finite());
    }

    #[test]
    fn gp_variance_is_bounded(pts in points(0.5, 1..15), x in vec3(1.0), grads in any::<bool>()) {
        let params = KernelParams::default();
        let gp = JointGp::fit(training(&pts, grads), params).unwrap();
        let scale = 0.3;
        let p = gp.predict(&x, 0.0, scale);
        let noise = params.value_noise * params.value_noise;
        prop_assert!(p.variance >= noise);
        prop_assert!(p.variance <= scale * scale + noise + 1e-12);
    }

    #[test]
    fn gp_ignores_training_order(pts in points(0.5, 2..15), x in vec3(1.0), shift in 1usize..14) {
        let params = KernelParams::default();
        let t = training(&pts, true);
        let mut rotated = pts.clone();
        rotated.rotate_left(shift % pts.len());
        let a = JointGp::fit(t, params).unwrap().predict(&x, 0.1, 0.3);
        let b = JointGp::fit(training(&rotated, true), params).unwrap().predict(&x, 0.1, 0.3);
        prop_assert!((a.mean - b.mean).abs() <= 1e-8 * (1.0 + a.mean.abs()));
        prop_assert!((a.variance - b.variance).abs() <= 1e-8 * a.variance);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn em_weights_sum_to_one(pts in points(1.0, 40..120), k in 1usize..5, seed in any::<u64>()) {
        let samples: Vec<DistanceSample> = pts
            .iter()
            .map(|p| DistanceSample { position: *p, distance: p.z * 0.5 })
            .collect();
        let fit = fit_em(&samples, k, EmInit::KMeansPlusPlus { seed }, &EmConfig::default()).unwrap();
        let total: f64 = fit.components.iter().map(|c| c.weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(fit.components.iter().all(|c| c.weight > 0.0));
    }
}
