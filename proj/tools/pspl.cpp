#include "pspl/cli.hpp"

int main(int argc, char** argv) { return pspl::cli::run_cli(argc, argv); }
