pub(crate) use num_traits::Float;
