#include "mfe/cli.hpp"

int main(int argc, char** argv) { return mfe::run_cli(argc, argv); }
