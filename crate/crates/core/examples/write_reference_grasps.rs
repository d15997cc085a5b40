fn main() {
    print!("{}", hgrasp_core::harness::quality::reference_grasp_file());
}
