#include "pisc/cli.hpp"

int main(int argc, char** argv) { return pisc::run_cli(argc, argv); }
