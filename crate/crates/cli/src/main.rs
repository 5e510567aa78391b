fn main() {
    std::process::exit(persona_survey_cli::run(std::env::args_os()));
}
