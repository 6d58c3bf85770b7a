#include "dekgci/cli.hpp"

int main(int argc, char** argv) { return dekgci::run_cli(argc, argv); }
