//! Floating point abstraction shared by every numerical routine.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use realfft::RealFftPlanner;
use rustfft::FftPlanner;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::Arc;

type C2cFn<T> = dyn Fn(&mut [Complex<T>], &mut [Complex<T>]) + Send + Sync;
type R2cFn<T> = dyn Fn(&mut [T], &mut [Complex<T>], &mut [Complex<T>]) + Send + Sync;
type C2rFn<T> = dyn Fn(&mut [Complex<T>], &mut [T], &mut [Complex<T>]) + Send + Sync;

/// Real scalar type usable by the library (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant.
    fn of(x: f64) -> Self;

    /// Converts an integer count.
    fn of_usize(x: usize) -> Self {
        Self::of(x as f64)
    }

    fn to64(self) -> f64;

    /// Complex-to-complex transform of length `len`; `inverse` selects `e^{+2πi}`.
    fn c2c(len: usize, inverse: bool) -> ComplexFft<Self>;

    /// Real-to-complex and complex-to-real transforms of length `len`.
    fn real_pair(len: usize) -> RealFftPair<Self>;
}

/// Unnormalized complex FFT of a fixed length applied in place to
/// buffers holding one or more consecutive lines.
#[derive(Clone)]
pub struct ComplexFft<T> {
    len: usize,
    scratch_len: usize,
    run: Arc<C2cFn<T>>,
}

impl<T: Scalar> ComplexFft<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn scratch_len(&self) -> usize {
        self.scratch_len
    }

    pub fn process(&self, buffer: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        debug_assert_eq!(buffer.len() % self.len, 0);
        (self.run)(buffer, scratch)
    }
}

/// Forward real-to-complex and inverse complex-to-real transforms, both
/// unnormalized. The half spectrum has `len / 2 + 1` entries.
#[derive(Clone)]
pub struct RealFftPair<T> {
    len: usize,
    scratch_len: usize,
    fwd: Arc<R2cFn<T>>,
    inv: Arc<C2rFn<T>>,
}

impl<T: Scalar> RealFftPair<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn scratch_len(&self) -> usize {
        self.scratch_len
    }

    /// `input` is used as workspace and left in an unspecified state.
    pub fn forward(&self, input: &mut [T], output: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        (self.fwd)(input, output, scratch)
    }

    /// Imaginary parts of the zero and Nyquist bins are ignored.
    /// `input` is used as workspace.
    pub fn inverse(&self, input: &mut [Complex<T>], output: &mut [T], scratch: &mut [Complex<T>]) {
        (self.inv)(input, output, scratch)
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline(always)]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline(always)]
            fn to64(self) -> f64 {
                self as f64
            }

            fn c2c(len: usize, inverse: bool) -> ComplexFft<Self> {
                let mut planner = FftPlanner::<$t>::new();
                let fft = if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                };
                let scratch_len = fft.get_inplace_scratch_len();
                ComplexFft {
                    len,
                    scratch_len,
                    run: Arc::new(move |buf, scratch| fft.process_with_scratch(buf, scratch)),
                }
            }

            fn real_pair(len: usize) -> RealFftPair<Self> {
                let mut planner = RealFftPlanner::<$t>::new();
                let fwd = planner.plan_fft_forward(len);
                let inv = planner.plan_fft_inverse(len);
                let scratch_len = fwd.get_scratch_len().max(inv.get_scratch_len());
                RealFftPair {
                    len,
                    scratch_len,
                    fwd: Arc::new(move |i, o, s| {
                        fwd.process_with_scratch(i, o, s).expect("real fft buffer sizes");
                    }),
                    inv: Arc::new(move |i, o, s| {
                        // Nonzero imaginary parts in the DC/Nyquist bins are
                        // reported as an error but the transform is still done.
                        let _ = inv.process_with_scratch(i, o, s);
                    }),
                }
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Numerically stable `log(1 + e^x)`.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::of(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic function.
pub fn softplus_grad<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv<T: Scalar>(y: T) -> T {
    if y > T::of(30.0) {
        y
    } else {
        y.exp_m1().ln()
    }
}
