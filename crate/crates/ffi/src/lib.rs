//! C ABI for `losslaw`.
//!
//! Laws and links cross the boundary as opaque handles owned by the caller
//! and released with the matching `_free` function. Every fallible call
//! returns a [`LosslawStatus`]; on failure, [`losslaw_last_error`] describes
//! the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use losslaw::cli::io::parse_body;
use losslaw::lawfit::{fit_law, optimal_model_size, predict_loss, FitConfig, LawForm, ScalingLaw};
use losslaw::losslink::{apply_link, compose_links, fit_link, translate_law, Endpoint, LinkKind, LossLink, ShiftY};
use losslaw::records::{DatasetId, MetricId, PairedPoint, RunRecord};
use losslaw::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosslawStatus {
    Ok = 0,
    Validation = 1,
    Numerical = 2,
    Domain = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosslawForm {
    PaperEq4 = 0,
    ChinchillaEq1 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosslawLawParams {
    pub form: LosslawForm,
    pub e: f64,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosslawLinkParams {
    pub k: f64,
    pub kappa: f64,
    pub shift_x: f64,
    pub shift_y: f64,
}

/// Opaque scaling law.
pub struct LosslawLaw(ScalingLaw);

/// Opaque loss-to-loss link.
pub struct LosslawLink(LossLink);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LosslawStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (LosslawStatus::Ok, String::new()),
        Ok(Err(Failure::Lib(e))) => {
            let status = match e {
                Error::Validation(_) => LosslawStatus::Validation,
                Error::Domain { .. } => LosslawStatus::Domain,
                Error::Numerical(_) => LosslawStatus::Numerical,
            };
            (status, e.to_string())
        }
        Ok(Err(Failure::Null(what))) => (LosslawStatus::NullPointer, format!("{what} is null")),
        Ok(Err(Failure::Utf8(what))) => (LosslawStatus::InvalidUtf8, format!("{what} is not valid UTF-8")),
        Err(_) => (LosslawStatus::Panic, "internal panic".to_string()),
    };
    set_last_error(&msg);
    status
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn losslaw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn losslaw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a law. `PaperEq4` is `E + ((A/N)^(alpha/beta) + B/D)^beta`,
/// `ChinchillaEq1` is `E + A/N^alpha + B/D^beta`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn losslaw_law_new(
    form: LosslawForm,
    e: f64,
    a: f64,
    b: f64,
    alpha: f64,
    beta: f64,
    out: *mut *mut LosslawLaw,
) -> LosslawStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let form = match form {
            LosslawForm::PaperEq4 => LawForm::PaperEq4,
            LosslawForm::ChinchillaEq1 => LawForm::ChinchillaEq1,
        };
        boxed(out, LosslawLaw(ScalingLaw::new(form, e, a, b, alpha, beta)?));
        Ok(())
    })
}

/// Parse a law from JSON: either a saved document or the bare law object.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_law_from_json(json: *const c_char, out: *mut *mut LosslawLaw) -> LosslawStatus {
    guard(|| {
        let text = string(json, "json")?;
        let out = out_ref(out, "out")?;
        let law: ScalingLaw = parse_body(text)?;
        law.validate()?;
        boxed(out, LosslawLaw(law));
        Ok(())
    })
}

/// Serialize a law as JSON. Release the string with [`losslaw_string_free`].
///
/// # Safety
/// `law` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_law_to_json(law: *const LosslawLaw, out: *mut *mut c_char) -> LosslawStatus {
    guard(|| {
        let law = deref(law, "law")?;
        let out = out_ref(out, "out")?;
        let text = serde_json::to_string(&law.0).map_err(|e| Error::numerical(e.to_string()))?;
        *out = CString::new(text)
            .map_err(|e| Error::numerical(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `law` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_law_params(law: *const LosslawLaw, out: *mut LosslawLawParams) -> LosslawStatus {
    guard(|| {
        let law = &deref(law, "law")?.0;
        *out_ref(out, "out")? = LosslawLawParams {
            form: match law.form {
                LawForm::PaperEq4 => LosslawForm::PaperEq4,
                LawForm::ChinchillaEq1 => LosslawForm::ChinchillaEq1,
            },
            e: law.e,
            a: law.a,
            b: law.b,
            alpha: law.alpha,
            beta: law.beta,
        };
        Ok(())
    })
}

/// Predicted loss of an `n_params`-parameter model trained on `n_tokens` tokens.
///
/// # Safety
/// `law` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_law_predict(
    law: *const LosslawLaw,
    n_params: u64,
    n_tokens: u64,
    out: *mut f64,
) -> LosslawStatus {
    guard(|| {
        let law = deref(law, "law")?;
        *out_ref(out, "out")? = predict_loss(&law.0, n_params, n_tokens)?;
        Ok(())
    })
}

/// Compute-optimal model size at a FLOP budget (translatable form only).
///
/// # Safety
/// `law` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_law_optimal_model_size(
    law: *const LosslawLaw,
    flop_budget: f64,
    out: *mut f64,
) -> LosslawStatus {
    guard(|| {
        let law = deref(law, "law")?;
        *out_ref(out, "out")? = optimal_model_size(&law.0, flop_budget)?;
        Ok(())
    })
}

/// Fit a law to `len` runs with the default multi-start configuration.
///
/// # Safety
/// The three arrays must each hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_law_fit(
    form: LosslawForm,
    n_params: *const u64,
    n_tokens: *const u64,
    loss: *const f64,
    len: usize,
    out: *mut *mut LosslawLaw,
) -> LosslawStatus {
    guard(|| {
        let ns = slice(n_params, len, "n_params")?;
        let ds = slice(n_tokens, len, "n_tokens")?;
        let ls = slice(loss, len, "loss")?;
        let out = out_ref(out, "out")?;
        let dataset = DatasetId::new("ffi")?;
        let metric = MetricId::train("loss")?;
        let records = (0..len)
            .map(|i| RunRecord::new(dataset.clone(), ns[i], ds[i], metric.clone(), ls[i], None))
            .collect::<Result<Vec<_>, _>>()?;
        let form = match form {
            LosslawForm::PaperEq4 => LawForm::PaperEq4,
            LosslawForm::ChinchillaEq1 => LawForm::ChinchillaEq1,
        };
        boxed(out, LosslawLaw(fit_law(&records, form, &FitConfig::default())?));
        Ok(())
    })
}

/// # Safety
/// `law` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn losslaw_law_free(law: *mut LosslawLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

unsafe fn endpoint(p: *const c_char, what: &'static str, default: &str) -> Result<Endpoint, Failure> {
    let s = if p.is_null() { default } else { string(p, what)? };
    Ok(s.parse()?)
}

/// Build a link `y = K (x - shift_x)^kappa + shift_y`.
///
/// Endpoints are `DATASET:NAME/SPLIT` strings; null selects `source:loss/train`
/// and `target:loss/train`.
///
/// # Safety
/// Non-null strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_link_new(
    k: f64,
    kappa: f64,
    shift_x: f64,
    shift_y: f64,
    source: *const c_char,
    target: *const c_char,
    out: *mut *mut LosslawLink,
) -> LosslawStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let link = LossLink {
            kind: LinkKind::General,
            k,
            kappa,
            shift_x,
            shift_y,
            shift_y_fitted_free: false,
            source: endpoint(source, "source", "source:loss/train")?,
            target: endpoint(target, "target", "target:loss/train")?,
        };
        link.validate()?;
        boxed(out, LosslawLink(link));
        Ok(())
    })
}

/// Fit a link to `len` paired losses. A NaN `shift_y` fits the target shift freely.
///
/// # Safety
/// `loss_x` and `loss_y` must hold `len` elements; non-null strings must be
/// NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_link_fit(
    loss_x: *const f64,
    loss_y: *const f64,
    len: usize,
    shift_x: f64,
    shift_y: f64,
    source: *const c_char,
    target: *const c_char,
    out: *mut *mut LosslawLink,
) -> LosslawStatus {
    guard(|| {
        let xs = slice(loss_x, len, "loss_x")?;
        let ys = slice(loss_y, len, "loss_y")?;
        let out = out_ref(out, "out")?;
        let pairs: Vec<PairedPoint> = xs
            .iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (&x, &y))| PairedPoint {
                n_params: i as u64,
                n_tokens: 0,
                loss_x: x,
                loss_y: y,
            })
            .collect();
        let sy = if shift_y.is_nan() {
            ShiftY::Free
        } else {
            ShiftY::Fixed(shift_y)
        };
        let link = fit_link(
            &pairs,
            shift_x,
            sy,
            LinkKind::General,
            endpoint(source, "source", "source:loss/train")?,
            endpoint(target, "target", "target:loss/train")?,
        )?;
        boxed(out, LosslawLink(link));
        Ok(())
    })
}

/// # Safety
/// `link` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_link_params(link: *const LosslawLink, out: *mut LosslawLinkParams) -> LosslawStatus {
    guard(|| {
        let l = &deref(link, "link")?.0;
        *out_ref(out, "out")? = LosslawLinkParams {
            k: l.k,
            kappa: l.kappa,
            shift_x: l.shift_x,
            shift_y: l.shift_y,
        };
        Ok(())
    })
}

/// # Safety
/// `link` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_link_apply(link: *const LosslawLink, loss_x: f64, out: *mut f64) -> LosslawStatus {
    guard(|| {
        let link = deref(link, "link")?;
        *out_ref(out, "out")? = apply_link(&link.0, loss_x)?;
        Ok(())
    })
}

/// Carry a law through a link whose `shift_x` equals the law's entropy.
///
/// # Safety
/// `law` and `link` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_translate_law(
    law: *const LosslawLaw,
    link: *const LosslawLink,
    out: *mut *mut LosslawLaw,
) -> LosslawStatus {
    guard(|| {
        let law = deref(law, "law")?;
        let link = deref(link, "link")?;
        let out = out_ref(out, "out")?;
        boxed(out, LosslawLaw(translate_law(&law.0, &link.0)?));
        Ok(())
    })
}

/// Chain `first` then `second`.
///
/// # Safety
/// Both links must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn losslaw_compose_links(
    first: *const LosslawLink,
    second: *const LosslawLink,
    out: *mut *mut LosslawLink,
) -> LosslawStatus {
    guard(|| {
        let first = deref(first, "first")?;
        let second = deref(second, "second")?;
        let out = out_ref(out, "out")?;
        boxed(out, LosslawLink(compose_links(&first.0, &second.0)?));
        Ok(())
    })
}

/// # Safety
/// `link` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn losslaw_link_free(link: *mut LosslawLink) {
    if !link.is_null() {
        drop(Box::from_raw(link));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn losslaw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
