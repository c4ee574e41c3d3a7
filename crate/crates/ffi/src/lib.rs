//! C ABI over `airylab`.
//!
//! Objects are opaque handles created by `abl_*_new`/`abl_*_load` and released
//! with the matching `abl_*_free`. Every fallible call returns an
//! [`AblStatus`]; on failure a message is kept per thread and can be copied
//! out with [`abl_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use airylab::codebook::{make_codeword, BeamParams, Codebook, CodebookSpec};
use airylab::field::{ApertureField, PropagationOptions, Propagator};
use airylab::nn::{Network, NetworkWeights};
use airylab::scenario::{blockage_ratio, build_grid, ScenarioConfig};
use airylab::search::{self, SearchResult};
use airylab::{trajectory, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Sampling = 3,
    Geometry = 4,
    Parameter = 5,
    UnsupportedOracle = 6,
    Input = 7,
    Size = 8,
    Format = 9,
    Weights = 10,
    Config = 11,
    Io = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

impl From<&Error> for AblStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Sampling(_) => AblStatus::Sampling,
            Error::Geometry(_) => AblStatus::Geometry,
            Error::Parameter(_) => AblStatus::Parameter,
            Error::UnsupportedOracle(_) => AblStatus::UnsupportedOracle,
            Error::Input(_) => AblStatus::Input,
            Error::Size(_) => AblStatus::Size,
            Error::Format(_) => AblStatus::Format,
            Error::Weights(_) => AblStatus::Weights,
            Error::Config(_) | Error::Json(_) => AblStatus::Config,
            Error::Io(_) => AblStatus::Io,
        }
    }
}

/// Beam-training methods that need no network.
pub const ABL_METHOD_AIRY_BS: i32 = 0;
pub const ABL_METHOD_FOCUS_BS: i32 = 1;
pub const ABL_METHOD_AIRY_HIER: i32 = 2;

/// Scenario with its grid and propagator.
pub struct AblScenario {
    config: ScenarioConfig,
    prop: Propagator,
}

pub struct AblCodebook {
    codebook: Codebook,
}

pub struct AblNetwork {
    network: Network,
}

/// Outcome of one beam search.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AblSearchResult {
    pub l1: u32,
    pub l2: u32,
    pub l3: u32,
    pub theta: f64,
    pub r: f64,
    pub c: f64,
    pub gain: f64,
    pub overhead: u64,
}

impl From<&SearchResult> for AblSearchResult {
    fn from(r: &SearchResult) -> Self {
        Self {
            l1: r.index.0 as u32,
            l2: r.index.1 as u32,
            l3: r.index.2 as u32,
            theta: r.params.theta,
            r: r.params.r,
            c: r.params.c,
            gain: r.gain,
            overhead: r.overhead as u64,
        }
    }
}

/// Caustic point generated by one aperture position.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AblCausticPoint {
    pub x: f64,
    pub y: f64,
    /// Nonzero when the point lies in front of the aperture.
    pub valid: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Fail(AblStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(AblStatus::from(&e), e.to_string())
    }
}

type FfiResult = Result<(), Fail>;

fn null(what: &str) -> Fail {
    Fail(AblStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any failure or panic.
fn guard(f: impl FnOnce() -> FfiResult) -> AblStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AblStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AblStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(AblStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Copies `s` with a trailing NUL into `buf`.
unsafe fn copy_text(s: &str, buf: *mut c_char, len: usize) -> FfiResult {
    let dst = slice_mut(buf as *mut u8, len, "buffer")?;
    if dst.len() < s.len() + 1 {
        return Err(Fail(AblStatus::BufferTooSmall, format!("need {} bytes, got {}", s.len() + 1, dst.len())));
    }
    dst[..s.len()].copy_from_slice(s.as_bytes());
    dst[s.len()] = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn abl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf`. Returns the
/// buffer size the full message needs, including the NUL, or 0 when no
/// error has been recorded. A short buffer receives a truncated message.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn abl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Builds a scenario from scenario JSON. `padding_factor` 0 selects the
/// default row padding.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn abl_scenario_new(json: *const c_char, padding_factor: u32, out_: *mut *mut AblScenario) -> AblStatus {
    guard(|| {
        let slot = out(out_, "out")?;
        *slot = ptr::null_mut();
        let config = ScenarioConfig::from_json_str(text(json, "json")?)?;
        let grid = build_grid(&config)?;
        let mut options = PropagationOptions::default();
        if padding_factor > 0 {
            options.padding_factor = padding_factor as usize;
        }
        let prop = Propagator::with_options(&config, &grid, options)?;
        *slot = Box::into_raw(Box::new(AblScenario { config, prop }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from [`abl_scenario_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abl_scenario_free(scenario: *mut AblScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Writes the scenario hash (16 hex digits and a NUL) into `buf`.
///
/// # Safety
/// `scenario` must be a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn abl_scenario_hash(scenario: *const AblScenario, buf: *mut c_char, len: usize) -> AblStatus {
    guard(|| copy_text(&handle(scenario, "scenario")?.config.hash_hex(), buf, len))
}

/// Grid dimensions of the scenario.
///
/// # Safety
/// `scenario` must be a live handle; `cols` and `rows` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn abl_scenario_grid(scenario: *const AblScenario, cols: *mut usize, rows: *mut usize) -> AblStatus {
    guard(|| {
        let g = handle(scenario, "scenario")?.prop.grid();
        *out(cols, "cols")? = g.cols;
        *out(rows, "rows")? = g.rows;
        Ok(())
    })
}

/// Fraction of array elements whose line of sight to `(x, y)` is blocked.
///
/// # Safety
/// `scenario` must be a live handle; `ratio` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn abl_blockage_ratio(scenario: *const AblScenario, x: f64, y: f64, ratio: *mut f64) -> AblStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        *out(ratio, "ratio")? = blockage_ratio(&s.config, (x, y))?;
        Ok(())
    })
}

/// Propagates the codeword `(theta, r, c)` and samples the field at `n`
/// points given as interleaved `x, y` pairs. Writes interleaved `re, im`
/// pairs to `field`. Pass `r = INFINITY` for a steering beam.
///
/// # Safety
/// `points` must hold `2n` doubles and `field` room for `2n` doubles.
#[no_mangle]
pub unsafe extern "C" fn abl_field_at(
    scenario: *const AblScenario,
    theta: f64,
    r: f64,
    c: f64,
    points: *const f64,
    n: usize,
    field: *mut f64,
) -> AblStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let pts = slice(points, 2 * n, "points")?;
        let dst = slice_mut(field, 2 * n, "field")?;
        let params = BeamParams::new(theta, r, c);
        let cw = make_codeword(params, s.config.n_antennas, s.config.wavenumber(), s.config.antenna_spacing())?;
        let pairs: Vec<(f64, f64)> = pts.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let values = s.prop.probes(&ApertureField::from(&cw), &pairs)?;
        for (d, v) in dst.chunks_exact_mut(2).zip(values) {
            d[0] = v.re;
            d[1] = v.im;
        }
        Ok(())
    })
}

/// Builds an Airy codebook from codebook-spec JSON for the scenario's array.
///
/// # Safety
/// `scenario` must be a live handle, `json` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn abl_codebook_new(
    scenario: *const AblScenario,
    json: *const c_char,
    out_: *mut *mut AblCodebook,
) -> AblStatus {
    guard(|| {
        let slot = out(out_, "out")?;
        *slot = ptr::null_mut();
        let s = handle(scenario, "scenario")?;
        let spec: CodebookSpec = serde_json::from_str(text(json, "json")?).map_err(Error::from)?;
        let c = &s.config;
        let codebook = Codebook::new(&spec, c.n_antennas, c.wavenumber(), c.antenna_spacing())?;
        *slot = Box::into_raw(Box::new(AblCodebook { codebook }));
        Ok(())
    })
}

/// # Safety
/// `codebook` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn abl_codebook_free(codebook: *mut AblCodebook) {
    if !codebook.is_null() {
        drop(Box::from_raw(codebook));
    }
}

/// Number of codewords, or 0 for a null handle.
///
/// # Safety
/// `codebook` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn abl_codebook_len(codebook: *const AblCodebook) -> usize {
    codebook.as_ref().map_or(0, |c| c.codebook.len())
}

/// Runs a network-free search (`ABL_METHOD_*`) at receiver `(x, y)`.
///
/// # Safety
/// Handles must be live; `result` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn abl_search(
    scenario: *const AblScenario,
    codebook: *const AblCodebook,
    method: i32,
    x: f64,
    y: f64,
    result: *mut AblSearchResult,
) -> AblStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let cb = &handle(codebook, "codebook")?.codebook;
        let dst = out(result, "result")?;
        let r = match method {
            ABL_METHOD_AIRY_BS => search::exhaustive_sweep(&s.prop, cb, (x, y))?,
            ABL_METHOD_FOCUS_BS => search::sweep_indices(&s.prop, cb, &search::focusing_indices(cb)?, (x, y))?,
            ABL_METHOD_AIRY_HIER => search::hierarchical_search(&s.prop, cb, (x, y))?,
            m => return Err(Fail(AblStatus::Parameter, format!("unknown method {m}"))),
        };
        *dst = AblSearchResult::from(&r);
        Ok(())
    })
}

/// Loads an `AMPW0001` weights file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn abl_network_load(path: *const c_char, out_: *mut *mut AblNetwork) -> AblStatus {
    guard(|| {
        let slot = out(out_, "out")?;
        *slot = ptr::null_mut();
        let network = Network::new(NetworkWeights::load(Path::new(text(path, "path")?))?)?;
        *slot = Box::into_raw(Box::new(AblNetwork { network }));
        Ok(())
    })
}

/// Parses `AMPW0001` bytes held in memory.
///
/// # Safety
/// `bytes` must be valid for `len` bytes; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn abl_network_from_bytes(bytes: *const u8, len: usize, out_: *mut *mut AblNetwork) -> AblStatus {
    guard(|| {
        let slot = out(out_, "out")?;
        *slot = ptr::null_mut();
        let weights = NetworkWeights::from_bytes(slice(bytes, len, "bytes")?).map_err(Error::from)?;
        *slot = Box::into_raw(Box::new(AblNetwork { network: Network::new(weights)? }));
        Ok(())
    })
}

/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn abl_network_free(network: *mut AblNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Writes the class count of each task into `counts` and the task count
/// into `tasks`. Call with `len = 0` to query the task count.
///
/// # Safety
/// `counts` must have room for `len` values; `tasks` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn abl_network_classes(
    network: *const AblNetwork,
    counts: *mut usize,
    len: usize,
    tasks: *mut usize,
) -> AblStatus {
    guard(|| {
        let classes = &handle(network, "network")?.network.descriptor().class_counts;
        *out(tasks, "tasks")? = classes.len();
        if len == 0 {
            return Ok(());
        }
        let dst = slice_mut(counts, len, "counts")?;
        if dst.len() < classes.len() {
            return Err(Fail(AblStatus::BufferTooSmall, format!("{} tasks, room for {}", classes.len(), dst.len())));
        }
        dst[..classes.len()].copy_from_slice(classes);
        Ok(())
    })
}

/// Class probabilities for one complex beam pattern of length `n`, all
/// tasks concatenated in task order.
///
/// # Safety
/// `re` and `im` must hold `n` doubles; `probs` room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn abl_network_forward(
    network: *const AblNetwork,
    re: *const f64,
    im: *const f64,
    n: usize,
    probs: *mut f64,
    len: usize,
) -> AblStatus {
    guard(|| {
        let net = &handle(network, "network")?.network;
        let (re, im) = (slice(re, n, "re")?, slice(im, n, "im")?);
        let pattern: Vec<num_complex::Complex64> = re.iter().zip(im).map(|(&a, &b)| num_complex::Complex64::new(a, b)).collect();
        let p = net.forward(&pattern)?;
        let total: usize = p.tasks.iter().map(Vec::len).sum();
        let dst = slice_mut(probs, len, "probs")?;
        if dst.len() < total {
            return Err(Fail(AblStatus::BufferTooSmall, format!("need {total} probabilities, room for {}", dst.len())));
        }
        for (d, v) in dst.iter_mut().zip(p.tasks.iter().flatten()) {
            *d = *v;
        }
        Ok(())
    })
}

/// DFT sweep, inference and candidate sweep at `(x, y)` with `k[i]`
/// candidates for task `i`.
///
/// # Safety
/// Handles must be live; `k` must hold `k_len` values; `result` valid.
#[no_mangle]
pub unsafe extern "C" fn abl_dl_search(
    scenario: *const AblScenario,
    codebook: *const AblCodebook,
    network: *const AblNetwork,
    x: f64,
    y: f64,
    k: *const usize,
    k_len: usize,
    result: *mut AblSearchResult,
) -> AblStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let cb = &handle(codebook, "codebook")?.codebook;
        let net = &handle(network, "network")?.network;
        let k = slice(k, k_len, "k")?;
        let dst = out(result, "result")?;
        *dst = AblSearchResult::from(&search::dl_beam_training(&s.prop, net, cb, (x, y), k)?);
        Ok(())
    })
}

/// Caustic point of the ray family leaving aperture position `y0`.
///
/// # Safety
/// `point` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn abl_caustic_point(
    theta: f64,
    r: f64,
    c: f64,
    kappa: f64,
    y0: f64,
    point: *mut AblCausticPoint,
) -> AblStatus {
    guard(|| {
        let dst = out(point, "point")?;
        let p = trajectory::caustic_point(y0, &BeamParams::new(theta, r, c), kappa);
        *dst = AblCausticPoint { x: p.x, y: p.y, valid: i32::from(p.valid) };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let status = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(status, AblStatus::Panic);
        let mut buf = [0 as c_char; 4];
        // truncated copy still ends in NUL
        assert_eq!(unsafe { abl_last_error(buf.as_mut_ptr(), buf.len()) }, "internal panic".len() + 1);
        assert_eq!(buf[3], 0);
    }

    #[test]
    fn error_variants_have_their_own_codes() {
        let codes = [
            AblStatus::from(&Error::Sampling(String::new())),
            AblStatus::from(&Error::Geometry(String::new())),
            AblStatus::from(&Error::Parameter(String::new())),
            AblStatus::from(&Error::UnsupportedOracle(String::new())),
            AblStatus::from(&Error::Input(String::new())),
            AblStatus::from(&Error::Size(String::new())),
            AblStatus::from(&Error::Config(String::new())),
        ];
        for (i, a) in codes.iter().enumerate() {
            assert!(codes[i + 1..].iter().all(|b| a != b));
        }
    }
}
