#include "purrbeat/cli.hpp"

int main(int argc, char** argv) { return purrbeat::cli::run_cli(argc, argv); }
