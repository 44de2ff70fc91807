pub mod laplace;
pub mod quad;
pub mod roots;
pub mod special;
