#include "hvlab/cli.hpp"

int main(int argc, char** argv) { return hvlab::cli_main(argc, argv); }
