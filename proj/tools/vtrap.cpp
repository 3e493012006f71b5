#include "vtrap/cli.hpp"

int main(int argc, char** argv) { return vtrap::cli::run_cli(argc, argv); }
