#include "bdsde/cli.hpp"

int main(int argc, char** argv) { return bdsde::run_cli(argc, argv); }
