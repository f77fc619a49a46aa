#include "ortree/cli.hpp"

int main(int argc, char** argv) { return ortree::run_cli(argc, argv); }
