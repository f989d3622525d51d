from setuptools import setup, find_packages

# Base dependencies
install_requires = ['numpy', 'scipy>=1.8', 'docstring_parser', 'tqdm']

setup(
    name='varcontext',
    version='0.1.0',
    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    install_requires=install_requires,
    extras_require={
        'test': ['pytest', 'hypothesis'],
    },
    entry_points={
        'console_scripts': ['varcontext=varcontext.cli:main'],
    },
    description='Referring-expression grounding with a variational context model',
    long_description=open('README.md', encoding='utf-8').read(),
    long_description_content_type='text/markdown',
    python_requires='>=3.10',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.11',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    keywords='referring expressions, grounding, variational inference, multiple instance learning',
)
