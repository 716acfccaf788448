pub mod bench;
pub mod gen_toy;
pub mod inspect;
pub mod quantize;
pub mod verify;
