use super::NnError;

/// Dense NCHW tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self, NnError> {
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(NnError::ShapeMismatch {
                what: "tensor data",
                expected: format!("{expected} elements for {dims:?}"),
                got: format!("{} elements", data.len()),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 4], value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    /// Elements per batch item.
    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + h) * self.dims[3] + w
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f64) {
        let i = self.offset(n, c, h, w);
        self.data[i] = value;
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &mut self.data[start..start + len]
    }

    /// Copies the listed batch items into a new tensor, in order.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Self {
            dims: [indices.len(), self.dims[1], self.dims[2], self.dims[3]],
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn relu(&self) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| v.max(0.0)).collect(),
        }
    }
}
