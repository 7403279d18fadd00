#include "vgpl/cli.hpp"

int main(int argc, char** argv) { return vgpl::run_cli(argc, argv); }
