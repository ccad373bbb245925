fn main() { std::process::exit(episodic::cli::main_exit_code()); }
