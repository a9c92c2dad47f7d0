use crate::error::{EinconvError, Result};
use crate::graph::{ConvGeometry, BATCH, CHANNEL_IN, CHANNEL_OUT, FILTER, SPATIAL_IN, SPATIAL_OUT};
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, IndexLabel};

fn input_view<T: Scalar>(x: &DenseTensor<T>, geom: &ConvGeometry) -> Result<DenseTensor<T>> {
    let n = geom.n_axes();
    let mut order = vec![BATCH];
    order.extend(&SPATIAL_IN[..n]);
    order.push(CHANNEL_IN);
    let x = x.permute(&order)?;
    for a in 0..n {
        if x.dims()[a + 1] != geom.spatial_in[a] {
            return Err(EinconvError::Geometry(format!("input extent on axis {a}")));
        }
    }
    Ok(x)
}

fn spatial_out(geom: &ConvGeometry) -> Result<Vec<usize>> {
    (0..geom.n_axes()).map(|a| geom.spatial_out(a)).collect()
}

fn step(idx: &mut [usize], dims: &[usize]) -> bool {
    for k in (0..dims.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

fn output_labels(out: &[usize], batch: usize, channels: usize) -> Vec<IndexLabel> {
    let mut labels = vec![IndexLabel::new(BATCH, batch)];
    for a in 0..out.len() {
        labels.push(IndexLabel::new(SPATIAL_OUT[a], out[a]));
    }
    labels.push(IndexLabel::new(CHANNEL_OUT, channels));
    labels
}

/// Source coordinate for output position `o` and filter offset `f`, if inside.
fn source(o: usize, f: usize, pad: usize, stride: usize, extent: usize) -> Option<usize> {
    (o * stride + f).checked_sub(pad).filter(|&s| s < extent)
}

/// Direct nested-loop convolution: x `(n, h, w, .., c)`, kernel
/// `(i, j, .., c, c')`, output `(n, h', w', .., c')`.
pub fn direct_conv_oracle<T: Scalar>(x: &DenseTensor<T>, kernel: &DenseTensor<T>, geom: &ConvGeometry) -> Result<DenseTensor<T>> {
    let n_ax = geom.n_axes();
    let x = input_view(x, geom)?;
    let mut korder: Vec<&str> = FILTER[..n_ax].to_vec();
    korder.push(CHANNEL_IN);
    korder.push(CHANNEL_OUT);
    let k = kernel.permute(&korder)?;
    let kd = k.dims();
    let batch = x.dims()[0];
    let c_in = x.dims()[n_ax + 1];
    if kd[n_ax] != c_in || kd[..n_ax] != geom.filter[..] {
        return Err(EinconvError::Geometry("kernel shape does not match input".into()));
    }
    let out_sp = spatial_out(geom)?;
    let labels = output_labels(&out_sp, batch, kd[n_ax + 1]);
    let mut y = DenseTensor::zeros(labels);
    let mut xi = vec![0usize; n_ax + 2];
    let mut ki = vec![0usize; n_ax + 2];
    let mut yi = vec![0usize; n_ax + 2];
    for b in 0..batch {
        let mut o = vec![0usize; n_ax];
        loop {
            let mut f = vec![0usize; n_ax];
            loop {
                let src: Option<Vec<usize>> = (0..n_ax)
                    .map(|a| source(o[a], f[a], geom.padding, geom.stride, geom.spatial_in[a]))
                    .collect();
                if let Some(src) = src {
                    xi[0] = b;
                    xi[1..=n_ax].copy_from_slice(&src);
                    ki[..n_ax].copy_from_slice(&f);
                    yi[0] = b;
                    yi[1..=n_ax].copy_from_slice(&o);
                    for co in 0..kd[n_ax + 1] {
                        let mut acc = T::zero();
                        for ci in 0..c_in {
                            xi[n_ax + 1] = ci;
                            ki[n_ax] = ci;
                            ki[n_ax + 1] = co;
                            acc += x.get(&xi) * k.get(&ki);
                        }
                        yi[n_ax + 1] = co;
                        let cur = y.get(&yi);
                        y.set(&yi, cur + acc);
                    }
                }
                if !step(&mut f, &geom.filter) {
                    break;
                }
            }
            if !step(&mut o, &out_sp) {
                break;
            }
        }
    }
    Ok(y)
}

/// Depthwise convolution: kernel `(i, j, .., c)`, output channel label `c'`
/// with the same extent as `c`.
pub fn depthwise_oracle<T: Scalar>(x: &DenseTensor<T>, kernel: &DenseTensor<T>, geom: &ConvGeometry) -> Result<DenseTensor<T>> {
    let n_ax = geom.n_axes();
    let x = input_view(x, geom)?;
    let mut korder: Vec<&str> = FILTER[..n_ax].to_vec();
    korder.push(CHANNEL_IN);
    let k = kernel.permute(&korder)?;
    let batch = x.dims()[0];
    let c = x.dims()[n_ax + 1];
    if k.dims()[n_ax] != c || k.dims()[..n_ax] != geom.filter[..] {
        return Err(EinconvError::Geometry("kernel shape does not match input".into()));
    }
    let out_sp = spatial_out(geom)?;
    let mut y = DenseTensor::zeros(output_labels(&out_sp, batch, c));
    let mut xi = vec![0usize; n_ax + 2];
    let mut ki = vec![0usize; n_ax + 1];
    let mut yi = vec![0usize; n_ax + 2];
    for b in 0..batch {
        let mut o = vec![0usize; n_ax];
        loop {
            let mut f = vec![0usize; n_ax];
            loop {
                let src: Option<Vec<usize>> = (0..n_ax)
                    .map(|a| source(o[a], f[a], geom.padding, geom.stride, geom.spatial_in[a]))
                    .collect();
                if let Some(src) = src {
                    xi[0] = b;
                    xi[1..=n_ax].copy_from_slice(&src);
                    ki[..n_ax].copy_from_slice(&f);
                    yi[0] = b;
                    yi[1..=n_ax].copy_from_slice(&o);
                    for ch in 0..c {
                        xi[n_ax + 1] = ch;
                        ki[n_ax] = ch;
                        yi[n_ax + 1] = ch;
                        let cur = y.get(&yi);
                        y.set(&yi, cur + x.get(&xi) * k.get(&ki));
                    }
                }
                if !step(&mut f, &geom.filter) {
                    break;
                }
            }
            if !step(&mut o, &out_sp) {
                break;
            }
        }
    }
    Ok(y)
}
