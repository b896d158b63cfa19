# Generated by Django 6.0.2 on 2026-10-18 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='CertificateRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scenario', models.CharField(max_length=100)),
                ('metric', models.CharField(choices=[('RISE', 'Relative integral square error'), ('SSE', 'Supreme square error')], max_length=4)),
                ('channel', models.CharField(blank=True, max_length=50)),
                ('level', models.FloatField()),
                ('factor', models.FloatField(blank=True, help_text='2 level / (1 - level) when level < 1', null=True)),
                ('vertices', models.PositiveIntegerField()),
                ('payload', models.JSONField(help_text='Certificate document as written to disk')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at', '-id'],
            },
        ),
    ]
