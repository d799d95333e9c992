mod common;

use std::collections::HashMap;

use common::*;
use fieldpipe::io::{read_ensight, read_native, VariableMap};
use fieldpipe::mesh::{EntityKind, FieldQuantity, FieldStep, Mesh, RegionValues};
use fieldpipe::pipeline::{parse_pipeline, Pipeline};
use fieldpipe::Error;

fn fixture_map() -> VariableMap {
    VariableMap::new(vec![
        ("fluidMechPressure".into(), "pressure".into()),
        ("fluidMechVelocity".into(), "velocity".into()),
        ("cellLoad".into(), "load".into()),
    ])
    .unwrap()
}

#[test]
fn serial_listing_is_a_chain() {
    let ws = workspace();
    let p = Pipeline::load(&ws.path().join("serial.xml")).unwrap();
    assert_eq!(p.execution_order(), vec!["inputFilter", "interp1", "serialOut"]);
    assert_eq!(p.num_entries(), 10);
}

#[test]
fn parallel_listing_fans_out_and_in() {
    let ws = workspace();
    let text = std::fs::read_to_string(ws.path().join("parallel.xml")).unwrap();
    let doc = parse_pipeline(&text, ws.path()).unwrap();
    let out = doc.nodes.iter().find(|n| n.id == "parallelOut").unwrap();
    assert_eq!(out.inputs, vec!["interp1", "interp2", "interp3"]);
    for id in ["interp1", "interp2", "interp3"] {
        let n = doc.nodes.iter().find(|n| n.id == id).unwrap();
        assert_eq!(n.inputs, vec!["inputFilter"]);
    }
    let mut p = Pipeline::from_doc(doc).unwrap();
    let summary = p.run(Some(2)).unwrap();
    let data = read_native(&ws.path().join("parallelOut.cfsd")).unwrap();
    let names: Vec<&str> = data.manifest.quantities.iter().map(|q| q.name.as_str()).collect();
    assert_eq!(names, vec!["nodeLoad", "nodeLoadFluid", "nodeLoadSolid"]);
    assert_eq!(summary.quantities, vec!["nodeLoad", "nodeLoadFluid", "nodeLoadSolid"]);
    for q in &data.manifest.quantities {
        assert_eq!(q.steps, (0..10).collect::<Vec<_>>());
    }
}

#[test]
fn identity_pipeline_copies_input_bitwise() {
    let ws = workspace();
    let xml = pipeline_doc(&format!(
        "{SVD_FIXTURE}\n{}\n{}",
        ensight_input("in"),
        output("copy", "in", &["fluidMechPressure", "fluidMechVelocity"])
    ));
    let doc = write_doc(ws.path(), "identity.xml", &xml);
    let mut p = Pipeline::load(&doc).unwrap();
    p.run(None).unwrap();

    let src = read_ensight(&ws.path().join("ensight/fixture.case"), &fixture_map(), false).unwrap();
    let out = read_native(&ws.path().join("copy.cfsd")).unwrap();
    assert_eq!(out.manifest.steps.len(), 10);
    for (j, s) in out.manifest.steps.iter().enumerate() {
        assert_eq!(s.index, j);
        assert_eq!(s.value, src.manifest.steps[j].value);
        for q in ["fluidMechPressure", "fluidMechVelocity"] {
            let a = src.steps.read_step(q, j).unwrap();
            let b = out.steps.read_step(q, j).unwrap();
            for (ra, rb) in a.values.iter().zip(&b.values) {
                assert_eq!(ra.region, rb.region);
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&ra.data), bits(&rb.data));
            }
        }
    }
}

#[test]
fn region_list_selects_regions() {
    let ws = workspace();
    let body = format!(
        r#"{SVD_FIXTURE}
{}
<meshOutput id="part" inputFilterIds="in"><outputFile><hdf5/></outputFile><saveResults>
  <result resultName="fluidMechPressure"><regionList><region name="solid"/></regionList></result>
  <result resultName="cellLoad"><allRegions/></result>
</saveResults></meshOutput>"#,
        ensight_input("in")
    );
    let doc = write_doc(ws.path(), "regions.xml", &pipeline_doc(&body));
    Pipeline::load(&doc).unwrap().run(Some(1)).unwrap();
    let out = read_native(&ws.path().join("part.cfsd")).unwrap();
    let p = out.manifest.quantity("fluidMechPressure").unwrap();
    assert_eq!(p.regions.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), vec!["solid"]);
    let l = out.manifest.quantity("cellLoad").unwrap();
    assert_eq!(l.regions.len(), 2);
    let step = out.steps.read_step("fluidMechPressure", 2).unwrap();
    assert!(step.region("fluid").is_none());
    // step 3 (k = 3), solid nodes are global 5..13: 3 + 0.125 * g
    let expect: Vec<f64> = (5..13).map(|g| 3.0 + 0.125 * g as f64).collect();
    assert_eq!(step.region("solid").unwrap(), expect.as_slice());
}

#[test]
fn unknown_region_and_result_are_rejected() {
    let ws = workspace();
    for (save, needle) in [
        (r#"<result resultName="fluidMechPressure"><regionList><region name="regionX"/></regionList></result>"#, "regionX"),
        (r#"<result resultName="nothing"><allRegions/></result>"#, "nothing"),
    ] {
        let body = format!(
            r#"{SVD_FIXTURE}{}<meshOutput id="o" inputFilterIds="in"><saveResults>{save}</saveResults></meshOutput>"#,
            ensight_input("in")
        );
        let e = Pipeline::from_str(&pipeline_doc(&body), ws.path()).unwrap_err();
        assert!(e.is_validation(), "{e}");
        assert!(e.to_string().contains(needle), "{e}");
    }
}

#[test]
fn dangling_reference_reports_line() {
    let ws = workspace();
    let body = format!("{SVD_FIXTURE}\n{}\n{}", ensight_input("in"), output("o", "a", &[]));
    match Pipeline::from_str(&pipeline_doc(&body), ws.path()).unwrap_err() {
        Error::Xml { line, msg } => {
            assert_eq!(line, 10);
            assert!(msg.contains("unknown filter 'a'"), "{msg}");
        }
        e => panic!("{e}"),
    }
}

#[test]
fn schedule_mismatch_is_a_validation_error() {
    let ws = workspace();
    let body = format!("{}\n{}\n{}", svd(0, 10, 1e-5, 1.5e-5, false), ensight_input("in"), output("o", "in", &[]));
    let e = Pipeline::from_str(&pipeline_doc(&body), ws.path()).unwrap_err();
    assert!(e.is_validation());
    assert!(e.to_string().contains("nearest available"), "{e}");
}

fn lattice_mesh(n: usize, h: f64) -> Mesh {
    let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    hex_mesh("fluid", &xs, &xs, &xs)
}

#[test]
fn failing_step_keeps_earlier_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = lattice_mesh(4, 0.25);
    let values: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    write_field_container(&dir.path().join("in.cfsd"), &mesh, "p", EntityKind::Node, 1, &values, |k, x| {
        vec![if k == 5 && x == &[0.25, 0.25, 0.25] { f64::NAN } else { x[0] + k as f64 }]
    });
    let body = format!(
        r#"{}
{}
<differentiation type="SpaceDifferentiation_Gradient" inputFilterIds="in" id="grad">
  <singleResult><inputQuantity resultName="p"/><outputQuantity resultName="gradP"/></singleResult>
</differentiation>
{}"#,
        svd(0, 10, 1.0, 1.0, false),
        native_input("in", "in.cfsd"),
        output("out", "grad", &["gradP"])
    );
    let doc = write_doc(dir.path(), "fault.xml", &pipeline_doc(&body));
    let e = Pipeline::load(&doc).unwrap().run(Some(2)).unwrap_err();
    match &e {
        Error::Filter { id, msg } => {
            assert_eq!(id, "grad");
            assert!(msg.contains("step 5"), "{msg}");
        }
        other => panic!("{other}"),
    }
    let out = read_native(&dir.path().join("out.cfsd")).unwrap();
    assert_eq!(out.manifest.quantity("gradP").unwrap().steps, vec![0, 1, 2, 3, 4]);
    let s = out.steps.read_step("gradP", 4).unwrap();
    assert!(s.all_finite());
}

#[test]
fn trace_respects_dependencies() {
    let ws = workspace();
    let mut p = Pipeline::load(&ws.path().join("parallel.xml")).unwrap();
    let summary = p.run(Some(3)).unwrap();
    let deps: HashMap<&str, Vec<&str>> = HashMap::from([
        ("inputFilter", vec![]),
        ("interp1", vec!["inputFilter"]),
        ("interp2", vec!["inputFilter"]),
        ("interp3", vec!["inputFilter"]),
        ("parallelOut", vec!["interp1", "interp2", "interp3"]),
    ]);
    for (pos, ev) in summary.trace.iter().enumerate() {
        for d in &deps[ev.node.as_str()] {
            let before = summary.trace[..pos].iter().any(|e| e.node == *d && e.entry == ev.entry);
            assert!(before, "{} ran entry {} before {d}", ev.node, ev.entry);
        }
    }
    assert_eq!(summary.trace.len(), 5 * 10);
}

#[test]
fn time_derivative_is_aligned_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = lattice_mesh(3, 0.5);
    let dt = 0.5;
    let times: Vec<f64> = (1..=10).map(|k| k as f64 * dt).collect();
    write_field_container(&dir.path().join("in.cfsd"), &mesh, "q", EntityKind::Node, 1, &times, |k, x| {
        let t = (k + 1) as f64 * dt;
        vec![t * t + x[0]]
    });
    let body = format!(
        r#"{}
{}
<timeDeriv1 id="dt" inputFilterIds="in">
  <singleResult><inputQuantity resultName="q"/><outputQuantity resultName="dq"/></singleResult>
</timeDeriv1>
<differentiation type="SpaceDifferentiation_Gradient" inputFilterIds="dt" id="g">
  <singleResult><inputQuantity resultName="dq"/><outputQuantity resultName="gradDq"/></singleResult>
</differentiation>
<meshOutput id="out" inputFilterIds="in,dt,g"/>"#,
        svd(0, 10, dt, dt, false),
        native_input("in", "in.cfsd"),
    );
    let doc = write_doc(dir.path(), "td.xml", &pipeline_doc(&body));
    let mut p = Pipeline::load(&doc).unwrap();
    assert_eq!(p.lag("dt"), Some(2));
    assert_eq!(p.lag("g"), Some(2));
    p.run(None).unwrap();
    let out = read_native(&dir.path().join("out.cfsd")).unwrap();
    assert_eq!(out.manifest.quantity("q").unwrap().steps, (0..10).collect::<Vec<_>>());
    assert_eq!(out.manifest.quantity("dq").unwrap().steps, (2..8).collect::<Vec<_>>());
    assert_eq!(out.manifest.quantity("gradDq").unwrap().steps, (2..8).collect::<Vec<_>>());
    for j in 2..8 {
        let t = times[j];
        let s = out.steps.read_step("dq", j).unwrap();
        assert_eq!(s.step_value, t);
        for v in &s.values[0].data {
            assert!((v - 2.0 * t).abs() <= 1e-12 * 2.0 * t, "{v} vs {}", 2.0 * t);
        }
        let g = out.steps.read_step("gradDq", j).unwrap();
        assert!(g.values[0].data.iter().all(|v| v.abs() < 1e-9));
    }
}

#[test]
fn time_derivative_needs_five_steps() {
    let ws = workspace();
    let body = format!(
        r#"{}{}<timeDeriv1 id="dt" inputFilterIds="in"><singleResult><inputQuantity resultName="fluidMechPressure"/><outputQuantity resultName="dp"/></singleResult></timeDeriv1>{}"#,
        svd(0, 4, 1e-5, 1e-5, false),
        ensight_input("in"),
        output("o", "dt", &[])
    );
    let e = Pipeline::from_str(&pipeline_doc(&body), ws.path()).unwrap_err();
    assert!(e.is_validation());
    assert!(e.to_string().contains("at least 5"), "{e}");
}

#[test]
fn frequency_data_is_rejected_by_differentiation() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = lattice_mesh(3, 0.5);
    let regions = mesh.region_names();
    let q = FieldQuantity::new("p", EntityKind::Node, 1, fieldpipe::mesh::Domain::Frequency, regions).unwrap();
    let mut m = fieldpipe::io::Manifest::new(fieldpipe::mesh::Domain::Frequency);
    m.steps = vec![fieldpipe::io::native::StepEntry { index: 0, value: 100.0 }];
    m.quantities.push(fieldpipe::io::native::QuantityEntry {
        name: "p".into(),
        defined_on: EntityKind::Node,
        components: 1,
        value_kind: fieldpipe::mesh::ValueKind::Complex,
        regions: vec![fieldpipe::io::native::RegionCount {
            name: "fluid".into(),
            entity_count: 27,
        }],
        steps: vec![0],
    });
    let step = FieldStep {
        quantity: q,
        step_index: 0,
        step_value: 100.0,
        values: vec![RegionValues {
            region: "fluid".into(),
            data: (0..54).map(|i| i as f64).collect(),
        }],
    };
    fieldpipe::io::write_native(&dir.path().join("f.cfsd"), &mesh, &m, &[step]).unwrap();
    let body = format!(
        r#"{}{}<differentiation type="SpaceDifferentiation_Gradient" inputFilterIds="in" id="g"><singleResult><inputQuantity resultName="p"/><outputQuantity resultName="gp"/></singleResult></differentiation>{}"#,
        svd(0, 1, 100.0, 100.0, false),
        native_input("in", "f.cfsd"),
        output("o", "g", &[])
    );
    let e = Pipeline::from_str(&pipeline_doc(&body), dir.path()).unwrap_err();
    assert!(e.is_validation());
    assert!(e.to_string().contains("'g'"), "{e}");
    // Pure copies of frequency data are fine.
    let body = format!("{}{}{}", svd(0, 1, 100.0, 100.0, false), native_input("in", "f.cfsd"), output("o", "in", &[]));
    Pipeline::from_str(&pipeline_doc(&body), dir.path()).unwrap().run(Some(1)).unwrap();
    let out = read_native(&dir.path().join("o.cfsd")).unwrap();
    assert_eq!(out.steps.read_step("p", 0).unwrap().values[0].data.len(), 54);
}

#[test]
fn ambiguous_quantity_names_are_rejected() {
    let ws = workspace();
    let interp = |id: &str| {
        format!(
            r#"<interpolation type="FieldInterpolation_Cell2Node" id="{id}" inputFilterIds="in"><targetMesh><hdf5 fileName="target.cfsd"/></targetMesh><singleResult><inputQuantity resultName="cellLoad"/><outputQuantity resultName="same"/></singleResult></interpolation>"#
        )
    };
    let body = format!("{SVD_FIXTURE}{}{}{}{}", ensight_input("in"), interp("a"), interp("b"), output("o", "a b", &[]));
    let e = Pipeline::from_str(&pipeline_doc(&body), ws.path()).unwrap_err();
    assert!(e.to_string().contains("produced by both 'a' and 'b'"), "{e}");
}

#[test]
fn mesh_to_mesh_interpolation_needs_a_separate_target_file() {
    let ws = workspace();
    let body = format!(
        r#"{SVD_FIXTURE}{}<interpolation type="FieldInterpolation_Cell2Node" id="c2n" inputFilterIds="in"><targetMesh><ensight fileName="ensight/fixture.case"/></targetMesh><singleResult><inputQuantity resultName="cellLoad"/><outputQuantity resultName="n"/></singleResult></interpolation>{}"#,
        ensight_input("in"),
        output("o", "c2n", &[])
    );
    let e = Pipeline::from_str(&pipeline_doc(&body), ws.path()).unwrap_err();
    assert!(e.to_string().contains("separate file"), "{e}");
}

#[test]
fn validation_creates_no_files() {
    let ws = workspace();
    let before = tree_bytes(ws.path());
    Pipeline::load(&ws.path().join("serial.xml")).unwrap();
    Pipeline::load(&ws.path().join("parallel.xml")).unwrap();
    assert_eq!(before, tree_bytes(ws.path()));
}

#[test]
fn thread_count_does_not_change_output() {
    let ws = workspace();
    let doc = ws.path().join("parallel.xml");
    Pipeline::load(&doc).unwrap().run(Some(1)).unwrap();
    let one = tree_bytes(&ws.path().join("parallelOut.cfsd"));
    Pipeline::load(&doc).unwrap().run(Some(4)).unwrap();
    let four = tree_bytes(&ws.path().join("parallelOut.cfsd"));
    assert_eq!(one, four);
}

#[test]
fn delete_offset_renumbers_output_values() {
    let ws = workspace();
    let body = format!("{}{}{}", svd(0, 10, 1e-5, 1e-5, true), ensight_input("in"), output("o", "in", &["cellLoad"]));
    let doc = write_doc(ws.path(), "offset.xml", &pipeline_doc(&body));
    Pipeline::load(&doc).unwrap().run(None).unwrap();
    let out = read_native(&ws.path().join("o.cfsd")).unwrap();
    assert_eq!(out.manifest.steps[0].value, 1e-5);
    assert_eq!(out.manifest.steps[1].value, 2.0 * 1e-5);
}
