#include "vsr/runner.hpp"

int main(int argc, char** argv) { return vsr::run_cli(argc, argv); }
