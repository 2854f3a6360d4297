#include "cli.hpp"

int main(int argc, char** argv) { return stargraph::cli_main(argc, argv); }
