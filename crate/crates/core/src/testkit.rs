//! Independent oracles and canned fixtures for the test suites.
//!
//! Nothing here calls into the estimation code it is used to check.

pub mod oracle {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Derivative-free Nelder-Mead maximization of `f` from `x0` with initial
    /// simplex offsets `step`. Stops when the spread of simplex values falls
    /// below `ftol` or after `max_iter` iterations. Returns the best point and
    /// its value.
    pub fn nelder_mead_max<F>(f: F, x0: &[f64], step: &[f64], ftol: f64, max_iter: usize) -> (Vec<f64>, f64)
    where
        F: Fn(&[f64]) -> f64,
    {
        let d = x0.len();
        let neg = |x: &[f64]| {
            let v = f(x);
            if v.is_finite() {
                -v
            } else {
                f64::INFINITY
            }
        };
        let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
        for i in 0..d {
            let mut p = x0.to_vec();
            p[i] += step[i];
            pts.push(p);
        }
        let mut vals: Vec<f64> = pts.iter().map(|p| neg(p)).collect();
        for _ in 0..max_iter {
            let mut idx: Vec<usize> = (0..=d).collect();
            idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            pts = idx.iter().map(|&i| pts[i].clone()).collect();
            vals = idx.iter().map(|&i| vals[i]).collect();
            if (vals[d] - vals[0]).abs() <= ftol {
                break;
            }
            let centroid: Vec<f64> = (0..d)
                .map(|j| pts[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                (0..d).map(|j| centroid[j] + t * (pts[d][j] - centroid[j])).collect()
            };
            let xr = along(-1.0);
            let fr = neg(&xr);
            if fr < vals[0] {
                let xe = along(-2.0);
                let fe = neg(&xe);
                if fe < fr {
                    pts[d] = xe;
                    vals[d] = fe;
                } else {
                    pts[d] = xr;
                    vals[d] = fr;
                }
            } else if fr < vals[d - 1] {
                pts[d] = xr;
                vals[d] = fr;
            } else {
                let (xc, fc) = if fr < vals[d] {
                    let x = along(-0.5);
                    let v = neg(&x);
                    (x, v)
                } else {
                    let x = along(0.5);
                    let v = neg(&x);
                    (x, v)
                };
                if fc < vals[d].min(fr) {
                    pts[d] = xc;
                    vals[d] = fc;
                } else {
                    let best = pts[0].clone();
                    for i in 1..=d {
                        for j in 0..d {
                            pts[i][j] = best[j] + 0.5 * (pts[i][j] - best[j]);
                        }
                        vals[i] = neg(&pts[i]);
                    }
                }
            }
        }
        let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        (pts[best].clone(), -vals[best])
    }

    /// k-th smallest value (0-based) found by counting ranks, O(n^2).
    pub fn order_statistic(values: &[f64], k: usize) -> f64 {
        for &x in values {
            let below = values.iter().filter(|&&v| v < x).count();
            let at_or_below = values.iter().filter(|&&v| v <= x).count();
            if below <= k && k < at_or_below {
                return x;
            }
        }
        panic!("rank {k} out of range");
    }

    /// Linear-interpolation quantile at percentile `rank` built from
    /// [`order_statistic`].
    pub fn brute_quantile(values: &[f64], rank: f64) -> f64 {
        let n = values.len();
        let h = (n - 1) as f64 * rank / 100.0;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let a = order_statistic(values, lo);
        let b = order_statistic(values, hi);
        a + (h - lo as f64) * (b - a)
    }

    /// OLS through explicit normal equations `X'X b = X'y`, solved by Gaussian
    /// elimination with partial pivoting. Returns (coefficients, standard
    /// errors, residual variance).
    pub fn normal_equations_ols(cols: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let k = cols.len();
        let n = y.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        // augmented [X'X | X'y | I]
        let mut m = vec![vec![0.0; 2 * k + 1]; k];
        for i in 0..k {
            for j in 0..k {
                m[i][j] = dot(&cols[i], &cols[j]);
            }
            m[i][k] = dot(&cols[i], y);
            m[i][k + 1 + i] = 1.0;
        }
        for c in 0..k {
            let piv = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            m.swap(c, piv);
            let p = m[c][c];
            for v in m[c].iter_mut() {
                *v /= p;
            }
            for r in 0..k {
                if r != c {
                    let f = m[r][c];
                    let row_c = m[c].clone();
                    for (v, w) in m[r].iter_mut().zip(row_c) {
                        *v -= f * w;
                    }
                }
            }
        }
        let beta: Vec<f64> = (0..k).map(|i| m[i][k]).collect();
        let rss: f64 = (0..n)
            .map(|r| {
                let fit: f64 = (0..k).map(|j| beta[j] * cols[j][r]).sum();
                (y[r] - fit).powi(2)
            })
            .sum();
        let s2 = rss / (n - k) as f64;
        let se = (0..k).map(|i| (s2 * m[i][k + 1 + i]).sqrt()).collect();
        (beta, se, s2)
    }

    /// Plain-loop versions of the five pairwise sums: (n, s0, s1, s00, s01, s11).
    pub fn naive_pair_sums(v: &[f64]) -> (usize, f64, f64, f64, f64, f64) {
        let mut s = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 1..v.len() {
            s.0 += 1;
            s.1 += v[i - 1];
            s.2 += v[i];
            s.3 += v[i - 1] * v[i - 1];
            s.4 += v[i - 1] * v[i];
            s.5 += v[i] * v[i];
        }
        s
    }

    /// Sample skewness and excess kurtosis.
    pub fn skew_excess_kurtosis(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for x in xs {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    }

    /// A leg priced as geometric Brownian motion, observed at horizon `t`.
    #[derive(Debug, Clone, Copy)]
    pub struct GbmLeg {
        pub s0: f64,
        pub drift: f64,
        pub vol: f64,
    }

    impl GbmLeg {
        fn sample<R: Rng>(&self, t: f64, rng: &mut R) -> f64 {
            let z: f64 = rng.sample(StandardNormal);
            self.s0 * ((self.drift - 0.5 * self.vol * self.vol) * t + self.vol * t.sqrt() * z).exp()
        }
    }

    /// `n` independent draws of `ln(Y1 / Y2)` for two independent GBM legs.
    pub fn log_quotient_samples(a: GbmLeg, b: GbmLeg, t: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let y1 = a.sample(t, &mut rng);
                let y2 = b.sample(t, &mut rng);
                (y1 / y2).ln()
            })
            .collect()
    }
}

pub mod fixtures {
    use std::collections::HashMap;
    use std::io::{BufRead, BufReader, Write};
    use std::net::{TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};
    use std::thread::{self, JoinHandle};
    use std::time::Duration;

    use crate::ingest::{Kline, MINUTE_MS};

    /// Deterministic 1-minute klines on `[start, start + minutes)`, skipping
    /// the minute offsets in `skip`. Closes wander around `base`.
    pub fn synthetic_klines(base: f64, start: i64, minutes: i64, skip: &[i64]) -> Vec<Kline> {
        (0..minutes)
            .filter(|m| !skip.contains(m))
            .map(|m| {
                let wobble = ((m * 37 % 101) as f64 - 50.0) / 5000.0;
                let close = base * (1.0 + wobble);
                let open = base * (1.0 + wobble * 0.5);
                Kline {
                    open_time: start + m * MINUTE_MS,
                    open,
                    high: open.max(close) * 1.001,
                    low: open.min(close) * 0.999,
                    close,
                    volume: 1.0 + m as f64,
                    close_time: start + m * MINUTE_MS + MINUTE_MS - 1,
                }
            })
            .collect()
    }

    fn row_fields(k: &Kline) -> [String; 12] {
        [
            k.open_time.to_string(),
            k.open.to_string(),
            k.high.to_string(),
            k.low.to_string(),
            k.close.to_string(),
            k.volume.to_string(),
            k.close_time.to_string(),
            (k.volume * k.close).to_string(),
            "10".into(),
            (k.volume / 2.0).to_string(),
            (k.volume * k.close / 2.0).to_string(),
            "0".into(),
        ]
    }

    /// Binance archive CSV layout.
    pub fn kline_csv(rows: &[Kline]) -> String {
        rows.iter().map(|k| row_fields(k).join(",") + "\n").collect()
    }

    /// REST layout: integers as numbers, decimals as strings.
    pub fn kline_json(rows: &[Kline]) -> String {
        let rows: Vec<String> = rows
            .iter()
            .map(|k| {
                let f = row_fields(k);
                format!(
                    "[{},\"{}\",\"{}\",\"{}\",\"{}\",\"{}\",{},\"{}\",{},\"{}\",\"{}\",\"{}\"]",
                    f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8], f[9], f[10], f[11]
                )
            })
            .collect();
        format!("[{}]", rows.join(","))
    }

    /// Minimal HTTP/1.1 server answering klines requests from canned data.
    pub struct KlineServer {
        pub url: String,
        requests: Arc<AtomicUsize>,
        log: Arc<Mutex<Vec<String>>>,
        stop: Arc<AtomicBool>,
        handle: Option<JoinHandle<()>>,
    }

    impl KlineServer {
        /// `fail_first` requests are answered with HTTP 503 before serving data.
        pub fn start(data: HashMap<String, Vec<Kline>>, fail_first: usize) -> Self {
            let listener = TcpListener::bind("127.0.0.1:0").expect("bind fixture server");
            listener.set_nonblocking(true).unwrap();
            let url = format!("http://{}/api/v3/klines", listener.local_addr().unwrap());
            let requests = Arc::new(AtomicUsize::new(0));
            let log = Arc::new(Mutex::new(Vec::new()));
            let stop = Arc::new(AtomicBool::new(false));
            let (r, l, s) = (requests.clone(), log.clone(), stop.clone());
            let handle = thread::spawn(move || {
                while !s.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let seen = r.fetch_add(1, Ordering::SeqCst);
                            serve(stream, &data, seen < fail_first, &l);
                        }
                        Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(2));
                        }
                        Err(_) => break,
                    }
                }
            });
            Self {
                url,
                requests,
                log,
                stop,
                handle: Some(handle),
            }
        }

        pub fn requests(&self) -> usize {
            self.requests.load(Ordering::SeqCst)
        }

        /// Request targets seen so far.
        pub fn log(&self) -> Vec<String> {
            self.log.lock().unwrap().clone()
        }
    }

    impl Drop for KlineServer {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::SeqCst);
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    fn serve(
        stream: TcpStream,
        data: &HashMap<String, Vec<Kline>>,
        fail: bool,
        log: &Mutex<Vec<String>>,
    ) {
        stream.set_nonblocking(false).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).is_err() {
            return;
        }
        loop {
            let mut h = String::new();
            match reader.read_line(&mut h) {
                Ok(0) | Err(_) => break,
                Ok(_) if h == "\r\n" || h == "\n" => break,
                Ok(_) => {}
            }
        }
        let target = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
        log.lock().unwrap().push(target.clone());
        let (status, body) = if fail {
            ("503 Service Unavailable", "{\"msg\":\"busy\"}".to_string())
        } else {
            answer(&target, data)
        };
        let mut out = stream;
        let _ = write!(
            out,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        let _ = out.flush();
    }

    fn answer(target: &str, data: &HashMap<String, Vec<Kline>>) -> (&'static str, String) {
        let query = target.split_once('?').map(|(_, q)| q).unwrap_or("");
        let params: HashMap<&str, &str> = query
            .split('&')
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let Some(rows) = params.get("symbol").and_then(|s| data.get(*s)) else {
            return ("400 Bad Request", "{\"code\":-1121,\"msg\":\"Invalid symbol.\"}".into());
        };
        let start: i64 = params.get("startTime").and_then(|s| s.parse().ok()).unwrap_or(0);
        let end: i64 = params
            .get("endTime")
            .and_then(|s| s.parse().ok())
            .unwrap_or(i64::MAX);
        let limit: usize = params.get("limit").and_then(|s| s.parse().ok()).unwrap_or(500);
        let page: Vec<Kline> = rows
            .iter()
            .filter(|k| k.open_time >= start && k.open_time <= end)
            .take(limit)
            .copied()
            .collect();
        ("200 OK", kline_json(&page))
    }
}
