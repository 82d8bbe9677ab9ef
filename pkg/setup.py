# -*- coding: utf-8 -*-
"""Package setup configuration."""
from setuptools import setup

setup()
