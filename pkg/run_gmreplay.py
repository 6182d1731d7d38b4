#! /usr/bin/env python3
from gmreplay import cli

cli.main()
