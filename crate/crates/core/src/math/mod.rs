//! Small numerical toolbox shared by the pricing and solver modules.

pub mod interp;
pub mod normal;
pub mod optimize;
pub mod quadrature;
