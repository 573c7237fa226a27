//! Named parameter groups.
//!
//! Each group is generic over its element type so the same layout serves
//! for weights (`Tensor`), graph bindings (`NodeId`) and gradients.

/// Declares a parameter group struct with name-aware `map`, `try_map`,
/// `for_each` and `for_each_mut`. Fields are visited in declaration order.
macro_rules! param_group {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T = $crate::numerics::Tensor> {
            $($(#[$fmeta])* pub $field: T,)+
        }

        impl<T> $name<T> {
            pub const FIELDS: &'static [&'static str] = &[$(stringify!($field)),+];

            pub fn map<U>(&self, mut f: impl FnMut(&'static str, &T) -> U) -> $name<U> {
                $name { $($field: f(stringify!($field), &self.$field),)+ }
            }

            pub fn try_map<U, E>(
                &self,
                mut f: impl FnMut(&'static str, &T) -> Result<U, E>,
            ) -> Result<$name<U>, E> {
                Ok($name { $($field: f(stringify!($field), &self.$field)?,)+ })
            }

            pub fn for_each<'a>(&'a self, mut f: impl FnMut(&'static str, &'a T)) {
                $(f(stringify!($field), &self.$field);)+
            }

            pub fn for_each_mut<'a>(&'a mut self, mut f: impl FnMut(&'static str, &'a mut T)) {
                $(f(stringify!($field), &mut self.$field);)+
            }
        }
    };
}

pub(crate) use param_group;

/// Whether weight decay applies to a parameter, by name. Only matrices
/// named `*weight` decay; biases, layer-norm affine terms, the class token
/// and the position embedding do not.
pub fn decays(name: &str) -> bool {
    name.ends_with("weight")
}
