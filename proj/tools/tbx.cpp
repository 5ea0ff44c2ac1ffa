#include "tb/cli.hpp"

int main(int argc, char** argv) { return tb::cli_main(argc, argv); }
