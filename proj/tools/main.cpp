#include "ricl/cli.hpp"

int main(int argc, char** argv) { return ricl::run_cli(argc, argv); }
