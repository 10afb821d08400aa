#include "endoshift/cli.hpp"

int main(int argc, char** argv) { return endoshift::run_cli(argc, argv); }
