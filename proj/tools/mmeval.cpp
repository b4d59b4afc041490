#include "mmeval/cli.hpp"

int main(int argc, char** argv) { return mmeval::run_cli(argc, argv); }
