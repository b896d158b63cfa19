# Generated by Django 6.0.2 on 2026-10-18 14:40

from django.db import migrations, models


class Migration(migrations.Migration):

    dependencies = [
        ('certify', '0001_initial'),
    ]

    operations = [
        migrations.AddField(
            model_name='certificaterecord',
            name='seed',
            field=models.IntegerField(blank=True, null=True),
        ),
        migrations.AddField(
            model_name='certificaterecord',
            name='weights_digest',
            field=models.CharField(blank=True, help_text='SHA-256 of the certified network', max_length=64),
        ),
        migrations.AddField(
            model_name='certificaterecord',
            name='epsilon',
            field=models.JSONField(blank=True, default=dict, help_text='Training-error bound the level relies on'),
        ),
        migrations.AddField(
            model_name='certificaterecord',
            name='epsilon_digest',
            field=models.CharField(blank=True, max_length=64),
        ),
        migrations.AddIndex(
            model_name='certificaterecord',
            index=models.Index(fields=['scenario', 'metric', 'channel', 'weights_digest'], name='certificate_lookup_idx'),
        ),
    ]
