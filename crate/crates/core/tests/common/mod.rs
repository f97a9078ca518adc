//! Reference implementations and fixtures shared by the integration tests.
//! Everything here is written independently of the library code paths it checks.
#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use hull_uncertainty::ingestion::{PromptType, ResponseRecord};
use hull_uncertainty::pipeline::{CellKey, CellResult, ClusterSummary, HullStatus};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type P2 = [f64; 2];

// ---------------------------------------------------------------- linalg

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| scale * gaussian(rng)).collect())
        .collect()
}

pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut m = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            m[j] += r[j];
        }
    }
    m.iter().map(|s| s / rows.len() as f64).collect()
}

/// Sample covariance by the textbook double loop.
pub fn naive_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean = column_means(rows);
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for r in rows {
                s += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
            c[i][j] = s / (n as f64 - 1.0);
        }
    }
    c
}

fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Eigenpairs of a symmetric matrix by shifted power iteration with Hotelling
/// deflation, largest eigenvalue first.
pub fn power_eigen(a: &[Vec<f64>], count: usize) -> Vec<(f64, Vec<f64>)> {
    let d = a.len();
    let shift: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt() + 1.0;
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] += shift;
    }
    let mut out = Vec::new();
    for k in 0..count.min(d) {
        let mut v: Vec<f64> = (0..d)
            .map(|i| 1.0 + 0.1 * ((i * 7 + k * 3) % 5) as f64)
            .collect();
        let n0 = vnorm(&v);
        v.iter_mut().for_each(|x| *x /= n0);
        for _ in 0..2_000_000 {
            let w = matvec(&m, &v);
            let nw = vnorm(&w);
            if nw == 0.0 {
                break;
            }
            let next: Vec<f64> = w.iter().map(|x| x / nw).collect();
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if delta < 1e-14 {
                break;
            }
        }
        let rq: f64 = matvec(&m, &v).iter().zip(&v).map(|(x, y)| x * y).sum();
        for i in 0..d {
            for j in 0..d {
                m[i][j] -= rq * v[i] * v[j];
            }
        }
        out.push((rq - shift, v));
    }
    out
}

/// Random orthonormal pair in R^d.
pub fn random_plane(rng: &mut ChaCha8Rng, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let nu = vnorm(&u);
    u.iter_mut().for_each(|x| *x /= nu);
    let mut v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let p: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(&u).for_each(|(x, ui)| *x -= p * ui);
    let nv = vnorm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    (u, v)
}

/// Places 2D points isometrically into R^d through a random plane and offset.
pub fn embed_isometric(rng: &mut ChaCha8Rng, pts: &[P2], d: usize) -> Vec<Vec<f64>> {
    let (u, v) = random_plane(rng, d);
    let offset: Vec<f64> = (0..d).map(|_| 3.0 * gaussian(rng)).collect();
    pts.iter()
        .map(|p| {
            (0..d)
                .map(|k| offset[k] + p[0] * u[k] + p[1] * v[k])
                .collect()
        })
        .collect()
}

pub fn dist(a: &P2, b: &P2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

// ---------------------------------------------------------------- dbscan

/// Brute-force DBSCAN. Core points are linked into components through the
/// full neighbour matrix; components are numbered by their smallest core
/// index; a border point joins the adjacent component with the lowest number.
pub fn reference_dbscan(points: &[P2], eps: f64, min_samples: usize) -> Vec<i32> {
    let n = points.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| dist(&points[i], &points[j]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = adj
        .iter()
        .map(|r| r.iter().filter(|&&b| b).count() >= min_samples)
        .collect();

    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = next;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if adj[i][j] && core[j] && comp[j] == usize::MAX {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    (0..n)
        .map(|i| {
            if core[i] {
                comp[i] as i32
            } else {
                (0..n)
                    .filter(|&j| core[j] && adj[i][j])
                    .map(|j| comp[j])
                    .min()
                    .map_or(-1, |c| c as i32)
            }
        })
        .collect()
}

/// Partition as a sorted list of sorted member lists, noise kept separately.
pub fn canonical_partition(labels: &[i32]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    let mut noise = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l < 0 {
            noise.push(i);
        } else {
            groups.entry(l).or_default().push(i);
        }
    }
    let mut parts: Vec<Vec<usize>> = groups.into_values().collect();
    parts.sort();
    (parts, noise)
}

/// Points scattered around a few random centres, with some duplicates and
/// ties at exactly eps distance.
pub fn dbscan_instance(rng: &mut ChaCha8Rng) -> (Vec<P2>, f64, usize) {
    let n = rng.random_range(0..=64);
    let centres: Vec<P2> = (0..rng.random_range(1..=4))
        .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
        .collect();
    let spread = rng.random_range(0.3..2.5);
    let mut pts: Vec<P2> = Vec::with_capacity(n);
    for _ in 0..n {
        let roll: f64 = rng.random();
        if roll < 0.08 && !pts.is_empty() {
            let k = rng.random_range(0..pts.len());
            pts.push(pts[k]);
        } else if roll < 0.2 {
            pts.push([rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0)]);
        } else {
            let c = centres[rng.random_range(0..centres.len())];
            pts.push([c[0] + spread * gaussian(rng), c[1] + spread * gaussian(rng)]);
        }
    }
    // Grid-aligned points make exact-eps ties likely.
    if rng.random::<f64>() < 0.3 {
        for p in pts.iter_mut() {
            p[0] = p[0].round();
            p[1] = p[1].round();
        }
    }
    let eps = [0.5, 1.0, 1.5, 2.0, 3.0][rng.random_range(0..5)];
    let min_samples = rng.random_range(1..=6);
    (pts, eps, min_samples)
}

// ---------------------------------------------------------------- geometry

fn cross(o: &P2, a: &P2, b: &P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Area as a fan of triangles from the first vertex.
pub fn fan_area(vertices: &[P2]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let o = vertices[0];
    let mut s = 0.0;
    for w in vertices[1..].windows(2) {
        s += cross(&o, &w[0], &w[1]) / 2.0;
    }
    s.abs()
}

/// Every point lies left of or on every CCW edge, up to `tol` scaled by edge length.
pub fn contains_all(vertices: &[P2], points: &[P2], tol: f64) -> bool {
    let m = vertices.len();
    points.iter().all(|p| {
        (0..m).all(|i| {
            let a = vertices[i];
            let b = vertices[(i + 1) % m];
            cross(&a, &b, p) >= -tol * (1.0 + dist(&a, &b))
        })
    })
}

/// Gift-wrapping hull vertex set, strict extreme points only.
pub fn jarvis_vertices(points: &[P2]) -> Vec<P2> {
    let mut pts: Vec<P2> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let start = 0;
    let mut hull = Vec::new();
    let mut cur = start;
    loop {
        hull.push(pts[cur]);
        let mut cand = if cur == 0 { 1 } else { 0 };
        for j in 0..pts.len() {
            if j == cur {
                continue;
            }
            let c = cross(&pts[cur], &pts[cand], &pts[j]);
            // Prefer clockwise-most; on ties keep the farthest so collinear
            // points in between are skipped.
            if c < 0.0 || (c == 0.0 && dist(&pts[cur], &pts[j]) > dist(&pts[cur], &pts[cand])) {
                cand = j;
            }
        }
        cur = cand;
        if cur == start || hull.len() > pts.len() {
            break;
        }
    }
    hull.sort_by(|a, b| a.partial_cmp(b).unwrap());
    hull
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<P2> {
    (0..n)
        .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
        .collect()
}

pub fn rotate_translate(points: &[P2], angle: f64, t: P2) -> Vec<P2> {
    let (s, c) = angle.sin_cos();
    points
        .iter()
        .map(|p| [c * p[0] - s * p[1] + t[0], s * p[0] + c * p[1] + t[1]])
        .collect()
}

/// Distinct points after rounding, by formatting and sorting.
pub fn sort_scan_unique(points: &[P2], decimals: usize) -> usize {
    let fmt = |v: f64| {
        let s = format!("{:.*}", decimals, v);
        // "-0.000000" and "0.000000" name the same value.
        if s.trim_start_matches('-')
            .chars()
            .all(|c| c == '0' || c == '.')
        {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    };
    let mut keys: Vec<(String, String)> = points.iter().map(|p| (fmt(p[0]), fmt(p[1]))).collect();
    keys.sort();
    let mut count = 0;
    for i in 0..keys.len() {
        if i == 0 || keys[i] != keys[i - 1] {
            count += 1;
        }
    }
    count
}

// ---------------------------------------------------------------- statistics

pub fn naive_mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

/// Welford's single-pass variance, sample convention.
pub fn welford_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for &x in v {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    (m2 / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile: value at fractional rank q(n-1).
pub fn naive_quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= s.len() {
        s[lo]
    } else {
        s[lo] * (1.0 - frac) + s[lo + 1] * frac
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// A computed cell result with the given cluster areas.
pub fn fake_result(
    model: &str,
    prompt_type: PromptType,
    prompt: &str,
    t: f64,
    areas: &[f64],
) -> CellResult {
    let clusters: Vec<ClusterSummary> = areas
        .iter()
        .enumerate()
        .map(|(i, &a)| ClusterSummary {
            label: i as i32,
            point_count: 3,
            unique_points: 3,
            status: if a > 0.0 {
                HullStatus::Hull
            } else {
                HullStatus::Degenerate
            },
            hull: None,
            area: a,
        })
        .collect();
    CellResult {
        key: CellKey {
            prompt_id: prompt.into(),
            model_name: model.into(),
            temperature: t,
        },
        prompt_type,
        n_responses: 12,
        total_hull_area: areas.iter().sum(),
        num_clusters: areas.len(),
        noise_count: 0,
        clusters,
        guard: None,
        eps: Some(t),
        projected: None,
        labels: None,
    }
}

pub fn random_results(rng: &mut ChaCha8Rng, cells: usize) -> Vec<CellResult> {
    let models = ["m-a", "m-b"];
    let temps = [0.25, 0.5, 1.0];
    (0..cells)
        .map(|i| {
            let k = rng.random_range(0..4);
            let areas: Vec<f64> = (0..k)
                .map(|_| {
                    if rng.random::<f64>() < 0.15 {
                        0.0
                    } else {
                        rng.random_range(0.0..10.0)
                    }
                })
                .collect();
            fake_result(
                models[rng.random_range(0..2)],
                PromptType::ALL[rng.random_range(0..3)],
                &format!("p{i}"),
                temps[rng.random_range(0..3)],
                &areas,
            )
        })
        .collect()
}

/// Naive area statistics per (model, type, temperature) in first-seen order.
pub fn naive_area_groups(results: &[CellResult]) -> Vec<((String, PromptType, f64), [f64; 4])> {
    let mut keys: Vec<(String, PromptType, f64)> = Vec::new();
    let mut vals: Vec<Vec<f64>> = Vec::new();
    for r in results {
        let k = (r.key.model_name.clone(), r.prompt_type, r.key.temperature);
        match keys.iter().position(|x| *x == k) {
            Some(i) => vals[i].push(r.total_hull_area),
            None => {
                keys.push(k);
                vals.push(vec![r.total_hull_area]);
            }
        }
    }
    keys.into_iter()
        .zip(vals)
        .map(|(k, v)| {
            let stats = [
                naive_mean(&v),
                welford_std(&v),
                naive_quantile(&v, 0.5),
                naive_quantile(&v, 0.75) - naive_quantile(&v, 0.25),
            ];
            (k, stats)
        })
        .collect()
}

/// Naive clustering statistics per (model, type), pooling temperatures.
pub fn naive_clustering_groups(results: &[CellResult]) -> Vec<((String, PromptType), [f64; 6])> {
    let mut keys: Vec<(String, PromptType)> = Vec::new();
    let mut per_cell: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for r in results {
        let k = (r.key.model_name.clone(), r.prompt_type);
        let areas: Vec<f64> = r.clusters.iter().map(|c| c.area).collect();
        let m = if areas.is_empty() {
            0.0
        } else {
            naive_mean(&areas)
        };
        let cell = (r.num_clusters as f64, m, welford_std(&areas));
        match keys.iter().position(|x| *x == k) {
            Some(i) => per_cell[i].push(cell),
            None => {
                keys.push(k);
                per_cell.push(vec![cell]);
            }
        }
    }
    keys.into_iter()
        .zip(per_cell)
        .map(|(k, cells)| {
            let a: Vec<f64> = cells.iter().map(|c| c.0).collect();
            let b: Vec<f64> = cells.iter().map(|c| c.1).collect();
            let c: Vec<f64> = cells.iter().map(|c| c.2).collect();
            (
                k,
                [
                    naive_mean(&a),
                    welford_std(&a),
                    naive_mean(&b),
                    welford_std(&b),
                    naive_mean(&c),
                    welford_std(&c),
                ],
            )
        })
        .collect()
}

// ---------------------------------------------------------------- fixtures

/// Twelve points of a side-2 square: corners, edge midpoints and a
/// near-duplicate just inside each corner. Every point has enough neighbours
/// strictly inside radius 1, so the cluster does not hinge on exact ties.
pub fn square_points() -> Vec<P2> {
    vec![
        [0.0, 0.0],
        [2.0, 0.0],
        [2.0, 2.0],
        [0.0, 2.0],
        [1.0, 0.0],
        [2.0, 1.0],
        [1.0, 2.0],
        [0.0, 1.0],
        [0.001, 0.001],
        [1.999, 0.001],
        [1.999, 1.999],
        [0.001, 1.999],
    ]
}

pub fn record(
    prompt: &str,
    model: &str,
    t: f64,
    text: &str,
    embedding: Option<Vec<f64>>,
) -> ResponseRecord {
    ResponseRecord {
        prompt_id: prompt.into(),
        prompt_type: PromptType::Easy,
        model_name: model.into(),
        temperature: t,
        response_text: text.into(),
        embedding,
    }
}

// ---------------------------------------------------------------- stub server

/// Deterministic 4-dim vector for a text.
pub fn stub_vector(text: &str) -> Vec<f64> {
    let bytes = text.as_bytes();
    let s: u64 = bytes.iter().map(|&b| b as u64).sum();
    vec![
        bytes.len() as f64,
        s as f64 / 7.0,
        (s % 13) as f64,
        bytes.first().copied().unwrap_or(0) as f64 / 3.0,
    ]
}

/// Minimal embedding service on a loopback port. The first `fail_first`
/// requests answer 503.
pub struct StubServer {
    pub url: String,
    pub batches: Arc<Mutex<Vec<usize>>>,
    pub hits: Arc<AtomicUsize>,
}

impl StubServer {
    pub fn start(fail_first: usize) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        let batches = Arc::new(Mutex::new(Vec::new()));
        let hits = Arc::new(AtomicUsize::new(0));
        let (b, h) = (batches.clone(), hits.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (b, h) = (b.clone(), h.clone());
                thread::spawn(move || serve(stream, fail_first, b, h));
            }
        });
        Self { url, batches, hits }
    }

    pub fn requests(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batches.lock().unwrap().clone()
    }
}

fn serve(
    stream: TcpStream,
    fail_first: usize,
    batches: Arc<Mutex<Vec<usize>>>,
    hits: Arc<AtomicUsize>,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut len = 0usize;
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h).unwrap_or(0) == 0 {
                return;
            }
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let n = hits.fetch_add(1, Ordering::SeqCst);
        let (status, payload) = if n < fail_first {
            (
                "503 Service Unavailable",
                "{\"error\":\"busy\"}".to_string(),
            )
        } else {
            let req: HashMap<String, Vec<String>> = serde_json::from_slice(&body).unwrap();
            let texts = &req["texts"];
            batches.lock().unwrap().push(texts.len());
            let embeddings: Vec<Vec<f64>> = texts.iter().map(|t| stub_vector(t)).collect();
            (
                "200 OK",
                serde_json::json!({"embeddings": embeddings, "dim": 4}).to_string(),
            )
        };
        let resp = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
            payload.len()
        );
        if out.write_all(resp.as_bytes()).is_err() {
            return;
        }
        let _ = out.flush();
    }
}
