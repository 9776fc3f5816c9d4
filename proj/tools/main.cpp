#include "gcl_cli.hpp"

int main(int argc, char** argv) { return gcl::cli::run_cli(argc, argv); }
