use proptest::prelude::*;

use voxrec::grid::{metric_to_voxels, GridSpec, UpAxis};
use voxrec::mesh_io::triangle_normal;
use voxrec::par;
use voxrec::pipeline::{run, PipelineConfig};
use voxrec::synth::{generate, SceneSpec};
use voxrec::voxelizer::{classify_normal, triangle_voxels, NormalCone};
use voxrec::NormalState;

fn coord() -> impl Strategy<Value = f64> {
    -0.95f64..0.95
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [coord(), coord(), coord()]
}

proptest! {
    // Every point of a triangle lies in a voxel the triangle is assigned to.
    #[test]
    fn triangle_voxels_cover_sampled_points(a in point(), b in point(), c in point(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let Some(n) = triangle_normal(a, b, c) else { return Ok(()) };
        let spec = GridSpec::new([-1.0; 3], 0.1, [20, 20, 20], UpAxis::PLUS_Z).unwrap();
        let mut got = Vec::new();
        triangle_voxels(&spec, [a, b, c], n, &mut got);
        let (s, t) = if s + t > 1.0 { (1.0 - s, 1.0 - t) } else { (s, t) };
        let p: Vec<f64> = (0..3).map(|k| a[k] + s * (b[k] - a[k]) + t * (c[k] - a[k])).collect();
        let idx = spec.world_to_grid([p[0], p[1], p[2]]);
        let v = spec.linear([idx[0] as usize, idx[1] as usize, idx[2] as usize]);
        prop_assert!(got.contains(&v));
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
    }

    // Up/down iff the angle to the up axis is within the cone.
    #[test]
    fn normal_classes_follow_the_angle(theta in 0.0f64..180.0, phi in 0.0f64..360.0, half in 1.0f64..89.0) {
        let (st, ct) = theta.to_radians().sin_cos();
        let (sp, cp) = phi.to_radians().sin_cos();
        let n = [st * cp, st * sp, ct];
        let got = classify_normal(n, UpAxis::PLUS_Z, NormalCone::new(half).unwrap()).unwrap();
        prop_assume!((theta - half).abs() > 1e-6 && (180.0 - theta - half).abs() > 1e-6);
        let want = if theta < half {
            NormalState::NormalUp
        } else if 180.0 - theta < half {
            NormalState::NormalDown
        } else {
            NormalState::NormalHorizontal
        };
        prop_assert_eq!(got, want);
    }

    #[test]
    fn metric_to_voxels_is_the_floor(n in 0usize..200, frac in 0.0f64..0.99, vs in prop::sample::select(vec![0.01, 0.02, 0.05, 0.1])) {
        let m = (n as f64 + frac) * vs;
        prop_assert_eq!(metric_to_voxels(m, vs), n);
    }

    #[test]
    fn parallel_map_keeps_order(xs in prop::collection::vec(any::<i32>(), 0..500)) {
        let want: Vec<i64> = xs.iter().map(|&x| x as i64 * 3).collect();
        let got = par::with_threads(3, || par::map(&xs, |&x| x as i64 * 3));
        prop_assert_eq!(got, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // Shifting the input by whole voxels shifts the grid origin and nothing else.
    #[test]
    fn reconstruction_is_translation_covariant(dx in -20i32..20, dy in -20i32..20, dz in -20i32..20) {
        let mut spec = SceneSpec::preset("single_room").unwrap();
        spec.voxel_size = 0.1;
        let mesh = generate(&spec, 0).unwrap().mesh;
        let mut moved = mesh.clone();
        let d = [dx as f64 * 0.1, dy as f64 * 0.1, dz as f64 * 0.1];
        for v in &mut moved.vertices {
            for (c, dk) in v.iter_mut().zip(d) {
                *c += dk;
            }
        }
        let cfg = PipelineConfig { voxel_size: 0.1, ..Default::default() };
        let a = run(&mesh, &cfg).unwrap().labeled.unwrap();
        let b = run(&moved, &cfg).unwrap().labeled.unwrap();
        prop_assert_eq!(a.spec.dims, b.spec.dims);
        for ((ob, oa), dk) in b.spec.origin.iter().zip(a.spec.origin).zip(d) {
            prop_assert!((ob - oa - dk).abs() < 1e-9);
        }
        for v in 0..a.len() {
            let x: Vec<_> = a.assignments(v).map(|s| (s.room, s.classes, s.normals)).collect();
            let y: Vec<_> = b.assignments(v).map(|s| (s.room, s.classes, s.normals)).collect();
            prop_assert_eq!(x, y, "voxel {}", v);
        }
    }
}
