pub mod corpus;
pub mod model;
pub mod numerics;
pub mod par;
pub mod phonology;
pub mod probing;
