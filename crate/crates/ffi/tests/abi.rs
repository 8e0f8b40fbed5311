use std::ffi::{CStr, CString};
use std::io::Write;
use std::process::Command;
use std::ptr;

use adagraph_ffi::*;

fn last_error() -> String {
    let p = ag_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn options(mode: AgMode, threads: u32, machine: *const AgMachine) -> AgExecOptions {
    AgExecOptions {
        mode,
        threads,
        machine,
    }
}

const PROFILE: &str = "\
version 1
fingerprint test
level 1 32768
level 2 1048576
level 3 33554432
level 4 17179869184
threads 1 2 4
sample 16384 1 1
sample 16384 2 6
sample 16384 4 20
sample 524288 1 3
sample 524288 2 5
sample 524288 4 12
sample 16777216 1 10
sample 16777216 2 9
sample 16777216 4 11
sample 50331648 1 80
sample 50331648 2 40
sample 50331648 4 30
";

#[test]
fn load_graph_and_run_everything() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "# triangle plus tail\n0 1\n1 2\n2 0\n2 3").unwrap();
    let path = CString::new(file.path().to_str().unwrap()).unwrap();

    let mut graph = ptr::null_mut();
    unsafe {
        assert_eq!(ag_graph_load(path.as_ptr(), &mut graph), AgStatus::Ok);
        assert!(ag_last_error().is_null());
        let mut stats = AgGraphStats::default();
        assert_eq!(ag_graph_stats(graph, &mut stats), AgStatus::Ok);
        assert_eq!(stats.vertex_count, 4);
        assert_eq!(stats.edge_count, 4);

        let mut levels = [0u32; 4];
        let opts = options(AgMode::Simple, 2, ptr::null());
        assert_eq!(
            ag_bfs(graph, 0, &opts, levels.as_mut_ptr(), 4),
            AgStatus::Ok
        );
        assert_eq!(levels, [0, 1, 2, 3]);
        let mut levels = [0u32; 4];
        assert_eq!(
            ag_bfs(graph, 3, &opts, levels.as_mut_ptr(), 4),
            AgStatus::Ok
        );
        assert_eq!(levels, [u32::MAX, u32::MAX, u32::MAX, 0]);

        let params = ag_pagerank_default_params();
        let mut ranks = [0f64; 4];
        let mut iterations = 0;
        let seq = options(AgMode::Sequential, 0, ptr::null());
        assert_eq!(
            ag_pagerank(
                graph,
                AgPageRankVariant::Pull,
                &params,
                &seq,
                ranks.as_mut_ptr(),
                4,
                &mut iterations
            ),
            AgStatus::Ok
        );
        assert!(iterations > 0);
        assert!((ranks.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        ag_graph_free(graph);
    }
}

#[test]
fn scheduler_mode_uses_a_machine_profile() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(PROFILE.as_bytes()).unwrap();
    let path = CString::new(file.path().to_str().unwrap()).unwrap();
    let mut graph = ptr::null_mut();
    let mut machine = ptr::null_mut();
    unsafe {
        assert_eq!(ag_graph_rmat(10, 8.0, 7, &mut graph), AgStatus::Ok);
        let status = ag_machine_load(path.as_ptr(), &mut machine);
        assert_eq!(status, AgStatus::Ok, "{}", last_error());

        let mut ns = 0.0;
        assert_eq!(
            ag_machine_predict_latency(machine, 32768, 4, &mut ns),
            AgStatus::Ok
        );
        // At a level capacity the prediction is that level's measurement.
        assert!((ns - 20.0).abs() < 1e-9, "{ns}");

        let n = 1 << 10;
        let mut expected = vec![0u32; n];
        let mut got = vec![0u32; n];
        let seq = options(AgMode::Sequential, 0, ptr::null());
        let sched = options(AgMode::Scheduler, 4, machine);
        assert_eq!(
            ag_bfs(graph, 1, &seq, expected.as_mut_ptr(), n),
            AgStatus::Ok
        );
        assert_eq!(ag_bfs(graph, 1, &sched, got.as_mut_ptr(), n), AgStatus::Ok);
        assert_eq!(got, expected);

        let params = ag_pagerank_default_params();
        let mut a = vec![0f64; n];
        let mut b = vec![0f64; n];
        let none = ptr::null_mut();
        assert_eq!(
            ag_pagerank(
                graph,
                AgPageRankVariant::Push,
                &params,
                &seq,
                a.as_mut_ptr(),
                n,
                none
            ),
            AgStatus::Ok
        );
        assert_eq!(
            ag_pagerank(
                graph,
                AgPageRankVariant::Pull,
                &params,
                &sched,
                b.as_mut_ptr(),
                n,
                none
            ),
            AgStatus::Ok
        );
        let diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");

        ag_machine_free(machine);
        ag_graph_free(graph);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut graph = ptr::null_mut();
        assert_eq!(
            ag_graph_load(ptr::null(), &mut graph),
            AgStatus::NullPointer
        );
        assert!(last_error().contains("null"));

        let missing = CString::new("/nonexistent/graph.el").unwrap();
        assert_eq!(ag_graph_load(missing.as_ptr(), &mut graph), AgStatus::Io);
        assert!(graph.is_null());

        let mut machine = ptr::null_mut();
        assert_eq!(
            ag_machine_load(missing.as_ptr(), &mut machine),
            AgStatus::MissingProfile
        );
        assert!(last_error().contains("calibrate"));

        assert_eq!(
            ag_graph_rmat(0, 16.0, 1, &mut graph),
            AgStatus::InvalidArgument
        );

        assert_eq!(ag_graph_rmat(6, 4.0, 1, &mut graph), AgStatus::Ok);
        let mut small = [0u32; 3];
        let seq = options(AgMode::Sequential, 0, ptr::null());
        assert_eq!(
            ag_bfs(graph, 0, &seq, small.as_mut_ptr(), 3),
            AgStatus::BufferTooSmall
        );
        let mut levels = [0u32; 64];
        assert_eq!(
            ag_bfs(graph, 64, &seq, levels.as_mut_ptr(), 64),
            AgStatus::OutOfRange
        );
        let sched = options(AgMode::Scheduler, 2, ptr::null());
        assert_eq!(
            ag_bfs(graph, 0, &sched, levels.as_mut_ptr(), 64),
            AgStatus::MissingProfile
        );

        let mut params = ag_pagerank_default_params();
        params.damping = 1.5;
        let mut ranks = [0f64; 64];
        assert_eq!(
            ag_pagerank(
                graph,
                AgPageRankVariant::Push,
                &params,
                &seq,
                ranks.as_mut_ptr(),
                64,
                ptr::null_mut()
            ),
            AgStatus::InvalidArgument
        );

        // A later success clears the message.
        assert_eq!(
            ag_bfs(graph, 0, &seq, levels.as_mut_ptr(), 64),
            AgStatus::Ok
        );
        assert!(ag_last_error().is_null());
        ag_graph_free(graph);
        ag_graph_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/adagraph.h");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(status) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header])
            .status()
        else {
            eprintln!("{compiler} not available, skipping");
            continue;
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}
