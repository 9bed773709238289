#!/usr/bin/env python3

from setuptools import setup
from sys import version_info

if version_info < (3, 7, 0):
    raise SystemExit('Sorry! chefshat requires python 3.7.0 or later.')

setup(
    name='chefshat',
    description='chefshat - Chef\'s Hat card game engine and learning agents',
    long_description=open('README.md', encoding='utf-8').read(),
    long_description_content_type='text/markdown',
    license='MIT',
    version='0.1.0',
    packages=['chefshat', 'chefshat.agents'],
    package_data={'chefshat': ['default.yaml']},
    install_requires=['numpy', 'pyyaml'],
    tests_require=['pytest'],
    entry_points={'console_scripts': ['chefshat=chefshat.__main__:main']},
    classifiers=['Programming Language :: Python :: 3']
)
