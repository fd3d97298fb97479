pub mod dynamics;
pub mod game_lab;
pub mod hamiltonian;
pub mod hji_solver;
pub mod path_space;
pub mod strategies;
