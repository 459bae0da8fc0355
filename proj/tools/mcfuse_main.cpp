#include "mcfuse/cli.hpp"

int main(int argc, char** argv) { return mcfuse::cli::run_cli(argc, argv); }
